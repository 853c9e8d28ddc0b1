#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "tracefn/trace.hpp"

namespace tracefn {

// Stable 64-bit digest of a node's identity tuple.
struct NodeId {
  std::uint64_t value = 0;

  auto operator<=>(const NodeId&) const = default;
  std::string to_hex() const;
  static NodeId from_hex(std::string_view hex);
};

// One function invocation context. The same source function reached through
// different caller chains, or with a different scope signature, is a
// different node.
struct FunctionNode {
  std::string script_url;
  std::string function_name;
  std::int64_t line = 1;
  std::int64_t column = 1;
  ScopeSignature scope;
  // Digest of the (script_url, function_name, line, column) tuples of every
  // frame below this one in the stack, outermost last.
  std::uint64_t context_hash = 0;
  bool is_eval = false;
  bool is_inline = false;

  // Ordering used for deterministic listings and as the identity tuple.
  auto identity() const {
    return std::tie(script_url, function_name, line, column, scope, context_hash);
  }
};

enum class ActivityKind { kDomElement, kNetwork, kStorage, kWebApi };

struct ActivityNode {
  ActivityKind kind = ActivityKind::kNetwork;
  // Selector, request URL, "<mechanism>:<key>", or API name.
  std::string attribute;

  auto identity() const { return std::tie(kind, attribute); }
};

using GraphNode = std::variant<FunctionNode, ActivityNode>;

enum class EdgeKind { kCall, kBehavioral };
enum class Behavior { kNone, kRequest, kDom, kStorageGet, kStorageSet, kApiGet, kApiSet };

struct Edge {
  NodeId src;
  NodeId dst;
  EdgeKind kind = EdgeKind::kCall;
  Behavior behavior = Behavior::kNone;
  std::int64_t multiplicity = 1;

  auto key() const { return std::tie(src, dst, kind, behavior); }
};

// Which function nodes one consumed event's stack resolved to.
struct StackObservation {
  std::size_t event_index = 0;
  EventKind event_kind = EventKind::kNetworkRequest;
  std::vector<NodeId> frames;  // [0] is the initiator
  NodeId activity;
  // DOM method for dom_modification events (attribute mutations without an
  // explicit method count as setAttribute).
  DomCall dom_call = DomCall::kNone;

  bool operator==(const StackObservation&) const = default;
};

class PageGraph {
 public:
  PageGraph() = default;

  const std::string& page_url() const { return page_url_; }
  const std::map<NodeId, GraphNode>& nodes() const { return nodes_; }
  // Sorted by (src, dst, kind, behavior).
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<StackObservation>& observations() const { return observations_; }
  std::size_t skipped_events() const { return skipped_events_; }

  const GraphNode* find(NodeId id) const;
  const FunctionNode* find_function(NodeId id) const;

  // Indices into edges().
  const std::vector<std::size_t>& out_edges(NodeId id) const;
  const std::vector<std::size_t>& in_edges(NodeId id) const;

  bool operator==(const PageGraph& other) const;

 private:
  friend class GraphAssembler;

  void rebuild_adjacency();

  std::string page_url_;
  std::map<NodeId, GraphNode> nodes_;
  std::vector<Edge> edges_;
  std::vector<StackObservation> observations_;
  std::size_t skipped_events_ = 0;
  std::map<NodeId, std::vector<std::size_t>> out_;
  std::map<NodeId, std::vector<std::size_t>> in_;
};

// Accumulates nodes and edges; used by build_graph and by graph loading.
class GraphAssembler {
 public:
  explicit GraphAssembler(std::string page_url);

  NodeId add_function(const FunctionNode& node);
  NodeId add_activity(const ActivityNode& node);
  void add_node(NodeId id, GraphNode node);
  void add_edge(NodeId src, NodeId dst, EdgeKind kind, Behavior behavior,
                std::int64_t multiplicity = 1);
  void add_observation(StackObservation observation);
  void count_skipped(std::size_t n = 1) { graph_.skipped_events_ += n; }

  PageGraph finish() &&;

 private:
  PageGraph graph_;
  std::map<std::tuple<NodeId, NodeId, EdgeKind, Behavior>, std::int64_t> edge_counts_;
};

NodeId function_node_id(const FunctionNode& node);
NodeId activity_node_id(const ActivityNode& node);

// Digest of frames [first, end) of a call stack.
std::uint64_t caller_context_hash(const std::vector<StackFrame>& stack, std::size_t first);

PageGraph build_graph(const TraceLog& log);

// Deterministic order by identity tuple.
std::vector<std::pair<NodeId, FunctionNode>> function_nodes(const PageGraph& graph);

std::string_view to_string(ActivityKind kind);
std::string_view to_string(EdgeKind kind);
std::string_view to_string(Behavior behavior);

// Structured-text dump (JSON): nodes, then edges, then stack observations.
std::string dump_graph(const PageGraph& graph);
PageGraph load_graph(std::string_view text);

}  // namespace tracefn
