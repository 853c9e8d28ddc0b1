#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tracefn/features.hpp"
#include "tracefn/filterlist.hpp"

namespace tracefn {

class EmptyDataset : public std::invalid_argument {
 public:
  EmptyDataset() : std::invalid_argument("dataset is empty") {}
};

class TooFewRows : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Example {
  std::string key;  // script_url + function_name
  std::vector<double> features;
  bool tracking = false;

  bool operator==(const Example&) const = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Example> rows;

  std::size_t width() const { return schema.names.size(); }
  std::size_t size() const { return rows.size(); }
  bool operator==(const Dataset&) const = default;
};

// Joins feature rows with their labels; excluded and unlabeled nodes are
// dropped.
Dataset make_dataset(const std::vector<FeatureRow>& rows,
                     const std::map<NodeId, FunctionLabel>& labels);

// First occurrence per key wins; order otherwise preserved.
Dataset deduplicate(const Dataset& dataset);

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct DatasetSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

DatasetSplit split(const Dataset& dataset, SplitFractions fractions = {}, std::uint64_t seed = 0);

struct ForestParams {
  int num_trees = 1000;
  int max_depth = 20;
  std::optional<int> features_per_split;  // default floor(sqrt(F))
  bool bootstrap = true;
  std::uint64_t seed = 0;
  double tracking_weight = 1.0;
  unsigned threads = 0;  // 0: hardware concurrency; never affects the result

  int resolved_features_per_split(std::size_t width) const;
};

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;  // go left when value <= threshold
  int left = -1;
  int right = -1;
  double tracking_weight = 0.0;
  double non_tracking_weight = 0.0;

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // [0] is the root

  bool votes_tracking(std::span<const double> x) const;
  int depth() const;
  bool operator==(const DecisionTree&) const = default;
};

struct Prediction {
  bool tracking = false;
  double score = 0.0;
};

class Forest {
 public:
  Forest() = default;
  Forest(FeatureSchema schema, ForestParams params, std::vector<DecisionTree> trees)
      : schema_(std::move(schema)), params_(params), trees_(std::move(trees)) {}

  const FeatureSchema& schema() const { return schema_; }
  const ForestParams& params() const { return params_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  // Fraction of trees voting tracking; tracking iff score >= 0.5.
  Prediction predict(std::span<const double> x) const;

  bool operator==(const Forest& other) const {
    return schema_ == other.schema_ && trees_ == other.trees_;
  }

 private:
  FeatureSchema schema_;
  ForestParams params_;
  std::vector<DecisionTree> trees_;
};

Forest train(const Dataset& train_set, const ForestParams& params);

// Refuses vectors from a different feature schema.
Prediction predict(const Forest& forest, const FeatureVector& fv);

struct Metrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;

  static Metrics from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
  bool operator==(const Metrics&) const = default;
};

Metrics evaluate(const Forest& forest, const Dataset& test_set);

struct InformationGain {
  double bits = 0.0;
  double percent = 0.0;  // of H(label)
};

InformationGain information_gain(const Dataset& dataset, std::size_t feature);

struct RankedFeature {
  std::size_t index = 0;
  std::string name;
  InformationGain gain;
};

// All features, highest gain first (ties by index).
std::vector<RankedFeature> rank_features(const Dataset& dataset);

struct CrossValidation {
  std::vector<Metrics> folds;
  double mean_f1 = 0.0;
  double stddev_f1 = 0.0;  // population
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

CrossValidation cross_validate(const Dataset& dataset, int k, const ForestParams& params,
                               std::uint64_t seed);

inline constexpr int kModelFormatVersion = 1;

std::string save_model(const Forest& forest);
Forest load_model(std::string_view text);

}  // namespace tracefn
