#include "tracefn/features.hpp"

#include <gtest/gtest.h>

#include <deque>
#include <set>

#include "generators.hpp"
#include "test_support.hpp"

namespace tracefn {
namespace {

using testing::read_fixture;

NodeId node_named(const PageGraph& g, const std::string& name) {
  for (const auto& [id, fn] : function_nodes(g))
    if (fn.function_name == name) return id;
  throw std::runtime_error("no node " + name);
}

FunctionNode fn(const std::string& name) {
  FunctionNode n;
  n.script_url = "https://s.com/a.js";
  n.function_name = name;
  return n;
}

// Hand-built graph over integer-named nodes; returns ids in creation order.
struct Built {
  PageGraph graph;
  std::vector<NodeId> ids;
};

Built build_random_graph(testing::Gen& gen, int n, double edge_p, std::uint64_t salt = 0) {
  GraphAssembler a("https://p.com/");
  std::vector<NodeId> ids;
  for (int i = 0; i < n; ++i) {
    auto node = fn("f" + std::to_string(i));
    node.context_hash = salt;
    ids.push_back(a.add_function(node));
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && gen.coin(edge_p)) a.add_edge(ids[i], ids[j], EdgeKind::kCall, Behavior::kNone);
  return {std::move(a).finish(), ids};
}

// All-pairs BFS distances over an adjacency list; -1 when unreachable.
std::vector<std::vector<int>> all_pairs(const PageGraph& g, const std::vector<NodeId>& ids) {
  const auto n = ids.size();
  std::map<NodeId, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos[ids[i]] = i;
  std::vector<std::vector<int>> dist(n, std::vector<int>(n, -1));
  for (std::size_t s = 0; s < n; ++s) {
    dist[s][s] = 0;
    std::deque<std::size_t> q{s};
    while (!q.empty()) {
      const auto u = q.front();
      q.pop_front();
      for (const auto& e : g.edges()) {
        if (e.src != ids[u]) continue;
        const auto v = pos.at(e.dst);
        if (dist[s][v] < 0) {
          dist[s][v] = dist[s][u] + 1;
          q.push_back(v);
        }
      }
    }
  }
  return dist;
}

TEST(FeaturesTest, MouseFixtureTableRows) {
  const auto g = build_graph(parse_trace_log_or_throw(read_fixture("mouse_tracking.jsonl")));
  const auto send = extract_features(g, node_named(g, "sendReq"));
  const auto update = extract_features(g, node_named(g, "updateCookie"));
  const auto mouse = extract_features(g, node_named(g, "getMouseMove"));

  const auto row = [&](Feature f) {
    return std::vector<double>{send[f], update[f], mouse[f]};
  };
  using V = std::vector<double>;
  EXPECT_EQ((V{1, 1, 1}), row(Feature::kRequestsSent));
  EXPECT_EQ((V{1, 0, 0}), row(Feature::kIsGateway));
  EXPECT_EQ((V{0, 1, 0}), row(Feature::kCookieSetter));
  EXPECT_EQ((V{0, 0, 1}), row(Feature::kApiGetter));
  EXPECT_EQ((V{1, 1, 0}), row(Feature::kNumArgs));
  EXPECT_EQ((V{1, 0, 0}), row(Feature::kAscendantsWithStorage));
  EXPECT_EQ((V{0, 0, 1}), row(Feature::kDescendantsWithStorage));
  EXPECT_EQ((V{1, 1, 0}), row(Feature::kAscendantsWithWebApi));
  // Direct call neighbors follow the graph: getMouseMove -> updateCookie -> sendReq.
  EXPECT_EQ((V{0, 1, 1}), row(Feature::kCalleeFunctions));
  EXPECT_EQ((V{1, 1, 0}), row(Feature::kCallerFunctions));

  EXPECT_EQ((V{7, 7, 7}), row(Feature::kNumNodes));
  EXPECT_EQ((V{6, 6, 6}), row(Feature::kNumEdges));
  EXPECT_EQ((V{0, 1, 2}), row(Feature::kSuccessorFunctions));
  EXPECT_EQ((V{2, 1, 0}), row(Feature::kPredecessorFunctions));
}

TEST(FeaturesTest, IsolatedNodeIsAllZeroLocally) {
  GraphAssembler a("");
  const auto id = a.add_function(fn("lonely"));
  const auto g = std::move(a).finish();
  const auto fv = extract_features(g, id);
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const auto f = static_cast<Feature>(i);
    EXPECT_EQ(f == Feature::kNumNodes ? 1 : 0, fv[f]) << feature_name(f);
  }
}

TEST(FeaturesTest, ChainStorageReachability) {
  GraphAssembler a("");
  const auto A = a.add_function(fn("A"));
  const auto B = a.add_function(fn("B"));
  const auto C = a.add_function(fn("C"));
  const auto store = a.add_activity({ActivityKind::kStorage, "local_storage:k"});
  a.add_edge(A, B, EdgeKind::kCall, Behavior::kNone);
  a.add_edge(B, C, EdgeKind::kCall, Behavior::kNone);
  a.add_edge(C, store, EdgeKind::kBehavioral, Behavior::kStorageSet);
  const auto g = std::move(a).finish();
  EXPECT_EQ(1, extract_features(g, A)[Feature::kDescendantsWithStorage]);
  EXPECT_EQ(0, extract_features(g, C)[Feature::kAscendantsWithStorage]);
  EXPECT_EQ(0, extract_features(g, C)[Feature::kDescendantsWithStorage]);
  EXPECT_EQ(1, extract_features(g, C)[Feature::kStorageSetter]);
  EXPECT_EQ(3, extract_features(g, A)[Feature::kNumDescendants]);
  EXPECT_EQ(2, extract_features(g, A)[Feature::kSuccessorFunctions]);
  EXPECT_THROW(extract_features(g, store), NodeNotFunction);
}

TEST(FeaturesTest, GatewayDefinition) {
  GraphAssembler a("");
  const auto top = a.add_function(fn("top"));
  const auto inner = a.add_function(fn("inner"));
  const auto writer = a.add_function(fn("writer"));
  const auto net = a.add_activity({ActivityKind::kNetwork, "https://t.com/p"});
  const auto cookie = a.add_activity({ActivityKind::kStorage, "cookie:id"});
  a.add_edge(top, net, EdgeKind::kBehavioral, Behavior::kRequest);
  a.add_edge(top, inner, EdgeKind::kCall, Behavior::kNone);
  a.add_edge(top, writer, EdgeKind::kCall, Behavior::kNone);
  a.add_edge(inner, net, EdgeKind::kBehavioral, Behavior::kRequest);
  a.add_edge(writer, net, EdgeKind::kBehavioral, Behavior::kRequest);
  a.add_edge(writer, cookie, EdgeKind::kBehavioral, Behavior::kStorageSet);
  const auto g = std::move(a).finish();
  EXPECT_FALSE(is_gateway(g, top));  // no callers
  EXPECT_TRUE(is_gateway(g, inner));
  EXPECT_FALSE(is_gateway(g, writer));  // also writes storage
}

TEST(FeaturesTest, ClosenessPathAndTriangle) {
  GraphAssembler a("");
  const auto x = a.add_function(fn("a"));
  const auto y = a.add_function(fn("b"));
  const auto z = a.add_function(fn("c"));
  a.add_edge(x, y, EdgeKind::kCall, Behavior::kNone);
  a.add_edge(y, z, EdgeKind::kCall, Behavior::kNone);
  const auto path = std::move(a).finish();
  // c is reached by b (1) and a (2): r-1 = 2, S = 3, n-1 = 2.
  EXPECT_DOUBLE_EQ(2.0 / 3.0, closeness_centrality(path, z, Direction::kIn));
  EXPECT_DOUBLE_EQ(0.0, closeness_centrality(path, z, Direction::kOut));
  EXPECT_DOUBLE_EQ(2.0 / 3.0, closeness_centrality(path, x, Direction::kOut));
  EXPECT_DOUBLE_EQ(2.0, eccentricity(path, x));

  GraphAssembler k("");
  std::vector<NodeId> ids = {k.add_function(fn("p")), k.add_function(fn("q")),
                             k.add_function(fn("r"))};
  for (auto i : ids)
    for (auto j : ids)
      if (i != j) k.add_edge(i, j, EdgeKind::kCall, Behavior::kNone);
  const auto k3 = std::move(k).finish();
  for (auto i : ids) {
    EXPECT_DOUBLE_EQ(1.0, closeness_centrality(k3, i, Direction::kIn));
    EXPECT_DOUBLE_EQ(closeness_centrality(k3, i, Direction::kIn),
                     closeness_centrality(k3, i, Direction::kOut));
  }

  GraphAssembler one("");
  const auto solo = one.add_function(fn("solo"));
  EXPECT_EQ(0.0, closeness_centrality(std::move(one).finish(), solo, Direction::kOut));
}

TEST(FeaturesPropertyTest, CentralityMatchesBruteForce) {
  testing::Gen gen(515);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = static_cast<int>(gen.range(1, 50));
    const auto built = build_random_graph(gen, n, gen.unit() * 0.15);
    const auto dist = all_pairs(built.graph, built.ids);
    for (int i = 0; i < n; ++i) {
      int ecc = 0;
      double out_sum = 0, in_sum = 0;
      int out_reach = 0, in_reach = 0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        if (dist[i][j] > 0) {
          ecc = std::max(ecc, dist[i][j]);
          out_sum += dist[i][j];
          ++out_reach;
        }
        if (dist[j][i] > 0) {
          in_sum += dist[j][i];
          ++in_reach;
        }
      }
      ASSERT_EQ(ecc, eccentricity(built.graph, built.ids[i]));
      const auto expect = [&](int reach, double sum) {
        return reach == 0 ? 0.0 : (reach / sum) * (reach / static_cast<double>(n - 1));
      };
      ASSERT_NEAR(expect(out_reach, out_sum),
                  closeness_centrality(built.graph, built.ids[i], Direction::kOut), 1e-12);
      ASSERT_NEAR(expect(in_reach, in_sum),
                  closeness_centrality(built.graph, built.ids[i], Direction::kIn), 1e-12);
    }
  }
}

TEST(FeaturesPropertyTest, PermutationInvariance) {
  // Relabeling changes every NodeId (via the salted context hash) and hence
  // the map and edge ordering; features must not move.
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    testing::Gen g1(seed), g2(seed);
    const auto a = build_random_graph(g1, 20, 0.1, 0);
    const auto b = build_random_graph(g2, 20, 0.1, 0xdeadbeef + seed);
    for (std::size_t i = 0; i < a.ids.size(); ++i)
      ASSERT_EQ(extract_features(a.graph, a.ids[i]), extract_features(b.graph, b.ids[i]));
  }
}

TEST(FeaturesPropertyTest, OrderingLawsOnRandomTraces) {
  testing::Gen gen(31337);
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = build_graph(testing::random_trace(gen, 30, 10, 5));
    for (const auto& row : extract_all_features(g)) {
      const auto& f = row.features;
      ASSERT_GE(f[Feature::kSuccessorFunctions], f[Feature::kCalleeFunctions]);
      ASSERT_GE(f[Feature::kPredecessorFunctions], f[Feature::kCallerFunctions]);
      ASSERT_GE(f[Feature::kNumDescendants], f[Feature::kSuccessorFunctions]);
      ASSERT_GE(f[Feature::kNumAscendants], f[Feature::kPredecessorFunctions]);
      if (f[Feature::kIsGateway] == 1) ASSERT_GE(f[Feature::kRequestsSent], 1);
      ASSERT_EQ(f[Feature::kInPlusOut], f[Feature::kInEdges] + f[Feature::kOutEdges]);
      ASSERT_GE(f[Feature::kClosenessIn], 0);
      ASSERT_LE(f[Feature::kClosenessIn], 1);
    }
  }
}

TEST(FeatureMatrixTest, RoundTripsAndValidatesHeader) {
  testing::Gen gen(8);
  const auto g = build_graph(testing::random_trace(gen, 40));
  const auto rows = extract_all_features(g);
  ASSERT_FALSE(rows.empty());
  const auto text = write_feature_matrix(rows);
  const auto back = read_feature_matrix(text);
  ASSERT_EQ(rows.size(), back.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].node, back[i].node);
    EXPECT_EQ(rows[i].function_name, back[i].function_name);
    EXPECT_EQ(rows[i].context_hash, back[i].context_hash);
    EXPECT_EQ(rows[i].features, back[i].features);
  }
  auto broken = text;
  broken.replace(broken.find("num_nodes"), 9, "num_nodez");
  EXPECT_THROW(read_feature_matrix(broken), std::runtime_error);
  EXPECT_EQ(kFeatureCount, FeatureSchema::current().names.size());
}

}  // namespace
}  // namespace tracefn
