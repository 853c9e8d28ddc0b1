#include "tracefn/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"

namespace tracefn {

namespace {

using Json = nlohmann::ordered_json;

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// splitmix64 stream; one independent stream per (seed, stream id).
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream) : state_(mix64(seed) ^ mix64(~stream)) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (true) {
      const auto r = next();
      if (r >= threshold) return r % n;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::uint64_t state_;
};

constexpr std::uint64_t kSplitStream = 0x5350;
constexpr std::uint64_t kFoldStream = 0x464f;

Dataset with_rows(const Dataset& like, std::vector<Example> rows) {
  return {like.schema, std::move(rows)};
}

void check_width(const Dataset& data) {
  for (const auto& row : data.rows)
    if (row.features.size() != data.width())
      throw SchemaMismatch("row width " + std::to_string(row.features.size()) +
                           " does not match schema width " + std::to_string(data.width()));
}

double gini(double t, double n) {
  const double total = t + n;
  if (total <= 0) return 0.0;
  return 1.0 - (t * t + n * n) / (total * total);
}

struct Sample {
  std::uint32_t row;
  double weight;
  bool tracking;
};

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ForestParams& params, Rng rng)
      : data_(data), params_(params), rng_(rng),
        mtry_(params.resolved_features_per_split(data.width())) {}

  DecisionTree build(std::vector<Sample> samples) {
    grow(samples, 0, samples.size(), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<Sample>& s, std::size_t begin, std::size_t end, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double wt = 0, wn = 0;
    for (auto i = begin; i < end; ++i) (s[i].tracking ? wt : wn) += s[i].weight;
    tree_.nodes[index].tracking_weight = wt;
    tree_.nodes[index].non_tracking_weight = wn;
    if (depth >= params_.max_depth || wt == 0 || wn == 0 || end - begin < 2) return index;

    const double parent = gini(wt, wn);
    const double total = wt + wn;
    std::vector<std::size_t> features(data_.width());
    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < mtry_; ++k) {
      const auto j = k + rng_.below(features.size() - k);
      std::swap(features[k], features[j]);
    }

    int best_feature = -1;
    double best_threshold = 0, best_impurity = parent;
    std::vector<std::pair<double, std::size_t>> order;
    for (int k = 0; k < mtry_; ++k) {
      const auto f = features[k];
      order.clear();
      for (auto i = begin; i < end; ++i) order.emplace_back(data_.rows[s[i].row].features[f], i);
      std::sort(order.begin(), order.end());
      double lt = 0, ln = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto& sample = s[order[i].second];
        (sample.tracking ? lt : ln) += sample.weight;
        const double a = order[i].first, b = order[i + 1].first;
        if (!(a < b)) continue;
        const double left = lt + ln;
        const double impurity =
            (left * gini(lt, ln) + (total - left) * gini(wt - lt, wn - ln)) / total;
        if (impurity < best_impurity - 1e-12) {
          best_impurity = impurity;
          best_feature = static_cast<int>(f);
          best_threshold = a + (b - a) / 2;
          if (!(best_threshold < b)) best_threshold = a;
        }
      }
    }
    if (best_feature < 0) return index;

    const auto f = static_cast<std::size_t>(best_feature);
    const auto mid = std::stable_partition(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                           s.begin() + static_cast<std::ptrdiff_t>(end),
                                           [&](const Sample& x) {
                                             return data_.rows[x.row].features[f] <= best_threshold;
                                           }) -
                     s.begin();
    const auto split = static_cast<std::size_t>(mid);
    tree_.nodes[index].feature = best_feature;
    tree_.nodes[index].threshold = best_threshold;
    const int left = grow(s, begin, split, depth + 1);
    const int right = grow(s, split, end, depth + 1);
    tree_.nodes[index].left = left;
    tree_.nodes[index].right = right;
    return index;
  }

  const Dataset& data_;
  const ForestParams& params_;
  Rng rng_;
  int mtry_;
  DecisionTree tree_;
};

DecisionTree train_tree(const Dataset& data, const ForestParams& params, std::size_t tree_index) {
  Rng rng(params.seed, tree_index);
  const auto n = data.rows.size();
  std::vector<std::uint32_t> counts(n, params.bootstrap ? 0 : 1);
  if (params.bootstrap)
    for (std::size_t i = 0; i < n; ++i) ++counts[rng.below(n)];
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) continue;
    const bool tracking = data.rows[i].tracking;
    samples.push_back({static_cast<std::uint32_t>(i),
                       counts[i] * (tracking ? params.tracking_weight : 1.0), tracking});
  }
  return TreeBuilder(data, params, rng).build(std::move(samples));
}

double entropy(const std::map<bool, double>& counts) {
  double total = 0;
  for (const auto& [k, c] : counts) total += c;
  double h = 0;
  for (const auto& [k, c] : counts)
    if (c > 0) h -= (c / total) * std::log2(c / total);
  return h;
}

Json schema_json(const FeatureSchema& s) { return {{"version", s.version}, {"names", s.names}}; }

}  // namespace

int ForestParams::resolved_features_per_split(std::size_t width) const {
  const int w = static_cast<int>(width);
  int m = features_per_split ? *features_per_split
                             : static_cast<int>(std::floor(std::sqrt(static_cast<double>(width))));
  return std::clamp(m, 1, std::max(w, 1));
}

Dataset make_dataset(const std::vector<FeatureRow>& rows,
                     const std::map<NodeId, FunctionLabel>& labels) {
  Dataset out{FeatureSchema::current(), {}};
  for (const auto& row : rows) {
    const auto it = labels.find(row.node);
    if (it == labels.end() || it->second.label == Label::kExcluded) continue;
    out.rows.push_back({row.dedup_key(),
                        std::vector<double>(row.features.values.begin(), row.features.values.end()),
                        it->second.label == Label::kTracking});
  }
  return out;
}

Dataset deduplicate(const Dataset& dataset) {
  std::set<std::string> seen;
  std::vector<Example> rows;
  for (const auto& row : dataset.rows)
    if (seen.insert(row.key).second) rows.push_back(row);
  return with_rows(dataset, std::move(rows));
}

DatasetSplit split(const Dataset& dataset, SplitFractions fractions, std::uint64_t seed) {
  if (dataset.rows.empty()) throw EmptyDataset();
  if (fractions.train < 0 || fractions.validation < 0 || fractions.test < 0 ||
      std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be non-negative and sum to 1");
  const auto n = dataset.rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng(seed, kSplitStream).shuffle(order);
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions.train * n)));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions.validation * n)));
  DatasetSplit out{with_rows(dataset, {}), with_rows(dataset, {}), with_rows(dataset, {})};
  for (std::size_t i = 0; i < n; ++i) {
    auto& part = i < n_train ? out.train : i < n_train + n_val ? out.validation : out.test;
    part.rows.push_back(dataset.rows[order[i]]);
  }
  return out;
}

bool DecisionTree::votes_tracking(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf())
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                     ? nodes[i].left
                                     : nodes[i].right);
  return nodes[i].tracking_weight >= nodes[i].non_tracking_weight;
}

int DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    if (!nodes[i].is_leaf()) {
      stack.emplace_back(nodes[i].left, d + 1);
      stack.emplace_back(nodes[i].right, d + 1);
    }
  }
  return deepest;
}

Prediction Forest::predict(std::span<const double> x) const {
  if (x.size() != schema_.names.size())
    throw SchemaMismatch("feature vector has " + std::to_string(x.size()) + " values, model expects " +
                         std::to_string(schema_.names.size()));
  if (trees_.empty()) return {};
  std::size_t votes = 0;
  for (const auto& tree : trees_) votes += tree.votes_tracking(x) ? 1 : 0;
  const double score = static_cast<double>(votes) / static_cast<double>(trees_.size());
  return {score >= 0.5, score};
}

Forest train(const Dataset& train_set, const ForestParams& params) {
  if (train_set.rows.empty()) throw EmptyDataset();
  if (train_set.width() == 0) throw std::invalid_argument("dataset has no features");
  if (params.num_trees < 1 || params.max_depth < 1)
    throw std::invalid_argument("num_trees and max_depth must be >= 1");
  check_width(train_set);

  std::vector<DecisionTree> trees(static_cast<std::size_t>(params.num_trees));
  auto threads = params.threads ? params.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(params.num_trees));
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (auto i = next++; i < trees.size(); i = next++) trees[i] = train_tree(train_set, params, i);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return Forest(train_set.schema, params, std::move(trees));
}

Prediction predict(const Forest& forest, const FeatureVector& fv) {
  if (!(forest.schema() == FeatureSchema::current()))
    throw SchemaMismatch("model schema version " + std::to_string(forest.schema().version) +
                         " does not match feature schema version " +
                         std::to_string(kFeatureSchemaVersion));
  return forest.predict(fv.values);
}

Metrics Metrics::from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m{tp, fp, tn, fn};
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = m.precision + m.recall > 0
             ? 2 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.accuracy = ratio(tp + tn, tp + fp + tn + fn);
  return m;
}

Metrics evaluate(const Forest& forest, const Dataset& test_set) {
  if (test_set.rows.empty()) throw EmptyDataset();
  if (!(test_set.schema == forest.schema()))
    throw SchemaMismatch("test set schema differs from the model schema");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (const auto& row : test_set.rows) {
    const bool predicted = forest.predict(row.features).tracking;
    if (predicted && row.tracking) ++tp;
    else if (predicted) ++fp;
    else if (row.tracking) ++fn;
    else ++tn;
  }
  return Metrics::from_counts(tp, fp, tn, fn);
}

InformationGain information_gain(const Dataset& dataset, std::size_t feature) {
  if (dataset.rows.empty()) throw EmptyDataset();
  if (feature >= dataset.width()) throw std::out_of_range("feature index out of range");
  constexpr std::int64_t kBins = 10;
  const auto n = static_cast<std::int64_t>(dataset.rows.size());

  // Groups of equal value, in ascending order.
  std::map<double, std::map<bool, double>> groups;
  std::map<bool, double> overall;
  for (const auto& row : dataset.rows) {
    groups[row.features[feature]][row.tracking] += 1;
    overall[row.tracking] += 1;
  }
  std::map<std::int64_t, std::map<bool, double>> bins;
  std::int64_t key = 0;
  std::int64_t cum = 0;
  for (const auto& [value, counts] : groups) {
    double size = 0;
    for (const auto& [label, c] : counts) size += c;
    const auto cnt = static_cast<std::int64_t>(size);
    if (static_cast<std::int64_t>(groups.size()) <= kBins) {
      ++key;
    } else {
      // Bin by mid-rank; a group sitting exactly on a boundary gets its own bin.
      const auto scaled = kBins * (2 * cum + cnt);
      const auto t = scaled / (2 * n);
      key = scaled % (2 * n) == 0 ? 2 * t : 2 * t + 1;
    }
    for (const auto& [label, c] : counts) bins[key][label] += c;
    cum += cnt;
  }
  const double h = entropy(overall);
  double conditional = 0;
  for (const auto& [k, counts] : bins) {
    double size = 0;
    for (const auto& [label, c] : counts) size += c;
    conditional += size / static_cast<double>(n) * entropy(counts);
  }
  InformationGain ig;
  ig.bits = std::max(0.0, h - conditional);
  ig.percent = h > 0 ? 100.0 * ig.bits / h : 0.0;
  return ig;
}

std::vector<RankedFeature> rank_features(const Dataset& dataset) {
  std::vector<RankedFeature> out;
  for (std::size_t f = 0; f < dataset.width(); ++f)
    out.push_back({f, dataset.schema.names[f], information_gain(dataset, f)});
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.gain.bits > b.gain.bits; });
  return out;
}

CrossValidation cross_validate(const Dataset& dataset, int k, const ForestParams& params,
                               std::uint64_t seed) {
  if (k < 2) throw TooFewRows("cross-validation needs k >= 2");
  if (dataset.rows.size() < static_cast<std::size_t>(k))
    throw TooFewRows("cross-validation needs at least k rows");
  std::vector<std::size_t> order(dataset.rows.size());
  std::iota(order.begin(), order.end(), 0);
  Rng(seed, kFoldStream).shuffle(order);

  CrossValidation cv;
  for (int fold = 0; fold < k; ++fold) {
    Dataset train_part = with_rows(dataset, {});
    Dataset test_part = with_rows(dataset, {});
    for (std::size_t i = 0; i < order.size(); ++i)
      (static_cast<int>(i % static_cast<std::size_t>(k)) == fold ? test_part : train_part)
          .rows.push_back(dataset.rows[order[i]]);
    cv.folds.push_back(evaluate(train(train_part, params), test_part));
  }
  for (const auto& m : cv.folds) {
    cv.mean_f1 += m.f1 / k;
    cv.mean_precision += m.precision / k;
    cv.mean_recall += m.recall / k;
  }
  double var = 0;
  for (const auto& m : cv.folds) var += (m.f1 - cv.mean_f1) * (m.f1 - cv.mean_f1) / k;
  cv.stddev_f1 = std::sqrt(var);
  return cv;
}

std::string save_model(const Forest& forest) {
  Json doc;
  doc["format"] = "tracefn-forest";
  doc["version"] = kModelFormatVersion;
  doc["schema"] = schema_json(forest.schema());
  const auto& p = forest.params();
  doc["params"] = {{"num_trees", p.num_trees},
                   {"max_depth", p.max_depth},
                   {"features_per_split", p.resolved_features_per_split(forest.schema().names.size())},
                   {"bootstrap", p.bootstrap},
                   {"seed", p.seed},
                   {"tracking_weight", p.tracking_weight}};
  Json trees = Json::array();
  for (const auto& tree : forest.trees()) {
    Json feature = Json::array(), threshold = Json::array(), left = Json::array(),
         right = Json::array(), wt = Json::array(), wn = Json::array();
    for (const auto& node : tree.nodes) {
      feature.push_back(node.feature);
      threshold.push_back(node.threshold);
      left.push_back(node.left);
      right.push_back(node.right);
      wt.push_back(node.tracking_weight);
      wn.push_back(node.non_tracking_weight);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"tracking", wt},
                     {"non_tracking", wn}});
  }
  doc["trees"] = std::move(trees);
  return doc.dump() + "\n";
}

Forest load_model(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
  if (doc.value("format", "") != "tracefn-forest")
    throw std::runtime_error("model: not a forest document");
  if (doc.value("version", 0) != kModelFormatVersion)
    throw SchemaMismatch("model: unsupported format version");
  try {
    FeatureSchema schema;
    schema.version = doc.at("schema").at("version").get<int>();
    schema.names = doc.at("schema").at("names").get<std::vector<std::string>>();
    const auto& jp = doc.at("params");
    ForestParams params;
    params.num_trees = jp.at("num_trees").get<int>();
    params.max_depth = jp.at("max_depth").get<int>();
    params.features_per_split = jp.at("features_per_split").get<int>();
    params.bootstrap = jp.at("bootstrap").get<bool>();
    params.seed = jp.at("seed").get<std::uint64_t>();
    params.tracking_weight = jp.at("tracking_weight").get<double>();
    std::vector<DecisionTree> trees;
    for (const auto& jt : doc.at("trees")) {
      DecisionTree tree;
      const auto& feature = jt.at("feature");
      for (std::size_t i = 0; i < feature.size(); ++i) {
        TreeNode node;
        node.feature = feature[i].get<int>();
        node.threshold = jt.at("threshold")[i].get<double>();
        node.left = jt.at("left")[i].get<int>();
        node.right = jt.at("right")[i].get<int>();
        node.tracking_weight = jt.at("tracking")[i].get<double>();
        node.non_tracking_weight = jt.at("non_tracking")[i].get<double>();
        const int count = static_cast<int>(feature.size());
        if (node.feature >= static_cast<int>(schema.names.size()) ||
            (!node.is_leaf() && (node.left <= static_cast<int>(i) || node.right <= static_cast<int>(i) ||
                                 node.left >= count || node.right >= count)))
          throw std::runtime_error("malformed tree node");
        tree.nodes.push_back(node);
      }
      if (tree.nodes.empty()) throw std::runtime_error("empty tree");
      trees.push_back(std::move(tree));
    }
    return Forest(std::move(schema), params, std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
}

}  // namespace tracefn
