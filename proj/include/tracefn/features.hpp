#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tracefn/graph.hpp"

namespace tracefn {

// Column order of the feature matrix. Append-only; bump kFeatureSchemaVersion
// on any change.
enum class Feature : std::size_t {
  // structural
  kNumNodes,
  kNumEdges,
  kNodesPerEdge,
  kEdgesPerNode,
  kInEdges,
  kOutEdges,
  kInPlusOut,
  kAvgDegreeConnectivity,
  kClosenessIn,
  kClosenessOut,
  kEccentricity,
  kNumDescendants,
  kNumAscendants,
  kSuccessorFunctions,
  kPredecessorFunctions,
  kDescendantsWithStorage,
  kAscendantsWithStorage,
  kDescendantsWithWebApi,
  kAscendantsWithWebApi,
  kCallerFunctions,
  kCalleeFunctions,
  // contextual
  kRequestsSent,
  kParentIsEval,
  kIsGateway,
  kStorageGetter,
  kStorageSetter,
  kCookieGetter,
  kCookieSetter,
  kApiGetter,
  kApiSetter,
  kNumArgs,
  kNumLocal,
  kNumGlobal,
  kNumClosure,
  kAddEventListener,
  kRemoveEventListener,
  kGetAttribute,
  kSetAttribute,
  kRemoveAttribute,
  kCount,
};

inline constexpr std::size_t kFeatureCount = static_cast<std::size_t>(Feature::kCount);
inline constexpr int kFeatureSchemaVersion = 1;

struct FeatureSchema {
  int version = kFeatureSchemaVersion;
  std::vector<std::string> names;

  static const FeatureSchema& current();
  bool operator==(const FeatureSchema&) const = default;
};

std::string_view feature_name(Feature feature);

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](Feature f) { return values[static_cast<std::size_t>(f)]; }
  double operator[](Feature f) const { return values[static_cast<std::size_t>(f)]; }
  bool operator==(const FeatureVector&) const = default;
};

class NodeNotFunction : public std::invalid_argument {
 public:
  explicit NodeNotFunction(NodeId id)
      : std::invalid_argument("not a function node: " + id.to_hex()) {}
};

enum class Direction { kIn, kOut };

FeatureVector extract_features(const PageGraph& graph, NodeId node);

// Gateway: issues requests, is called by someone, and does nothing else.
bool is_gateway(const PageGraph& graph, NodeId node);

// Wasserman-Faust scaled closeness over finite shortest paths.
double closeness_centrality(const PageGraph& graph, NodeId node, Direction direction);

// Longest finite outgoing shortest-path distance; 0 for sinks.
double eccentricity(const PageGraph& graph, NodeId node);

struct FeatureRow {
  std::string page_url;
  NodeId node;
  std::string script_url;
  std::string function_name;
  std::int64_t line = 1;
  std::int64_t column = 1;
  std::uint64_t context_hash = 0;
  FeatureVector features;

  // Dataset dedup key.
  std::string dedup_key() const { return script_url + "\n" + function_name; }
};

// One row per function node, in function_nodes() order.
std::vector<FeatureRow> extract_all_features(const PageGraph& graph);

// Delimited text; header is the key columns followed by the schema names.
std::string write_feature_matrix(const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_feature_matrix(std::string_view text);

}  // namespace tracefn
