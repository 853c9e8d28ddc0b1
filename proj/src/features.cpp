#include "tracefn/features.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <map>
#include <set>

#include "tracefn/csv.hpp"

namespace tracefn {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "num_nodes",
    "num_edges",
    "nodes_per_edge",
    "edges_per_node",
    "in_edges",
    "out_edges",
    "in_plus_out",
    "avg_degree_connectivity",
    "closeness_in",
    "closeness_out",
    "eccentricity",
    "num_descendants",
    "num_ascendants",
    "successor_functions",
    "predecessor_functions",
    "descendants_with_storage",
    "ascendants_with_storage",
    "descendants_with_webapi",
    "ascendants_with_webapi",
    "caller_functions",
    "callee_functions",
    "requests_sent",
    "parent_is_eval",
    "is_gateway",
    "storage_getter",
    "storage_setter",
    "cookie_getter",
    "cookie_setter",
    "api_getter",
    "api_setter",
    "num_args",
    "num_local",
    "num_global",
    "num_closure",
    "add_event_listener",
    "remove_event_listener",
    "get_attribute",
    "set_attribute",
    "remove_attribute",
};

constexpr std::array<std::string_view, 7> kKeyColumns = {
    "page_url", "node_id", "script_url", "function_name", "line", "column", "context_hash"};

enum class EdgeFilter { kAll, kCallOnly };

// BFS distances from `start`, excluding start itself.
std::map<NodeId, std::size_t> bfs(const PageGraph& graph, NodeId start, Direction direction,
                                  EdgeFilter filter) {
  std::map<NodeId, std::size_t> dist;
  dist[start] = 0;
  std::deque<NodeId> queue{start};
  while (!queue.empty()) {
    const auto current = queue.front();
    queue.pop_front();
    const auto& incident =
        direction == Direction::kOut ? graph.out_edges(current) : graph.in_edges(current);
    for (const auto index : incident) {
      const auto& edge = graph.edges()[index];
      if (filter == EdgeFilter::kCallOnly && edge.kind != EdgeKind::kCall) continue;
      const auto next = direction == Direction::kOut ? edge.dst : edge.src;
      if (dist.try_emplace(next, dist[current] + 1).second) queue.push_back(next);
    }
  }
  dist.erase(start);
  return dist;
}

bool is_storage_behavior(Behavior b) {
  return b == Behavior::kStorageGet || b == Behavior::kStorageSet;
}

bool is_api_behavior(Behavior b) { return b == Behavior::kApiGet || b == Behavior::kApiSet; }

template <typename Pred>
bool has_incident_behavior(const PageGraph& graph, NodeId node, Pred pred) {
  for (const auto i : graph.out_edges(node))
    if (pred(graph.edges()[i].behavior)) return true;
  for (const auto i : graph.in_edges(node))
    if (pred(graph.edges()[i].behavior)) return true;
  return false;
}

std::size_t total_degree(const PageGraph& graph, NodeId node) {
  return graph.out_edges(node).size() + graph.in_edges(node).size();
}

const FunctionNode& require_function(const PageGraph& graph, NodeId node) {
  const auto* fn = graph.find_function(node);
  if (!fn) throw NodeNotFunction(node);
  return *fn;
}

std::string_view storage_mechanism_of(const PageGraph& graph, NodeId activity) {
  const auto* node = graph.find(activity);
  const auto* act = node ? std::get_if<ActivityNode>(node) : nullptr;
  if (!act) return {};
  const auto colon = act->attribute.find(':');
  return std::string_view(act->attribute).substr(0, colon);
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto result = std::from_chars(text.data(), end, value);
  if (result.ec != std::errc() || result.ptr != end)
    throw std::runtime_error("feature matrix: bad number '" + text + "'");
  return value;
}

}  // namespace

const FeatureSchema& FeatureSchema::current() {
  static const FeatureSchema schema = [] {
    FeatureSchema s;
    for (const auto name : kFeatureNames) s.names.emplace_back(name);
    return s;
  }();
  return schema;
}

std::string_view feature_name(Feature feature) {
  return kFeatureNames.at(static_cast<std::size_t>(feature));
}

double closeness_centrality(const PageGraph& graph, NodeId node, Direction direction) {
  const auto n = graph.nodes().size();
  if (n <= 1 || !graph.find(node)) return 0.0;
  // Incoming closeness measures distances *to* the node, i.e. a reverse BFS.
  const auto dist = bfs(graph, node, direction == Direction::kIn ? Direction::kIn : Direction::kOut,
                        EdgeFilter::kAll);
  if (dist.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [id, d] : dist) total += static_cast<double>(d);
  const double reached = static_cast<double>(dist.size());  // r - 1
  return (reached / total) * (reached / static_cast<double>(n - 1));
}

double eccentricity(const PageGraph& graph, NodeId node) {
  std::size_t longest = 0;
  for (const auto& [id, d] : bfs(graph, node, Direction::kOut, EdgeFilter::kAll))
    longest = std::max(longest, d);
  return static_cast<double>(longest);
}

bool is_gateway(const PageGraph& graph, NodeId node) {
  bool sends_request = false;
  for (const auto i : graph.out_edges(node)) {
    const auto& e = graph.edges()[i];
    if (e.kind != EdgeKind::kBehavioral) continue;
    if (e.behavior != Behavior::kRequest) return false;
    sends_request = true;
  }
  bool called = false;
  for (const auto i : graph.in_edges(node)) {
    const auto& e = graph.edges()[i];
    if (e.kind == EdgeKind::kBehavioral) return false;
    called = true;
  }
  return sends_request && called;
}

FeatureVector extract_features(const PageGraph& graph, NodeId node) {
  const auto& fn = require_function(graph, node);
  FeatureVector fv;

  const auto n = static_cast<double>(graph.nodes().size());
  const auto e = static_cast<double>(graph.edges().size());
  fv[Feature::kNumNodes] = n;
  fv[Feature::kNumEdges] = e;
  fv[Feature::kNodesPerEdge] = e > 0 ? n / e : 0.0;
  fv[Feature::kEdgesPerNode] = n > 0 ? e / n : 0.0;

  const auto& out = graph.out_edges(node);
  const auto& in = graph.in_edges(node);
  fv[Feature::kInEdges] = static_cast<double>(in.size());
  fv[Feature::kOutEdges] = static_cast<double>(out.size());
  fv[Feature::kInPlusOut] = static_cast<double>(in.size() + out.size());

  std::set<NodeId> neighbors;
  std::set<NodeId> callers;
  std::set<NodeId> callees;
  for (const auto i : out) {
    const auto& edge = graph.edges()[i];
    neighbors.insert(edge.dst);
    if (edge.kind == EdgeKind::kCall) callees.insert(edge.dst);
  }
  for (const auto i : in) {
    const auto& edge = graph.edges()[i];
    neighbors.insert(edge.src);
    if (edge.kind == EdgeKind::kCall) callers.insert(edge.src);
  }
  if (!neighbors.empty()) {
    double degree_sum = 0.0;
    for (const auto& nb : neighbors) degree_sum += static_cast<double>(total_degree(graph, nb));
    fv[Feature::kAvgDegreeConnectivity] = degree_sum / static_cast<double>(neighbors.size());
  }
  fv[Feature::kCallerFunctions] = static_cast<double>(callers.size());
  fv[Feature::kCalleeFunctions] = static_cast<double>(callees.size());

  fv[Feature::kClosenessIn] = closeness_centrality(graph, node, Direction::kIn);
  fv[Feature::kClosenessOut] = closeness_centrality(graph, node, Direction::kOut);

  const auto descendants = bfs(graph, node, Direction::kOut, EdgeFilter::kAll);
  const auto ascendants = bfs(graph, node, Direction::kIn, EdgeFilter::kAll);
  std::size_t longest = 0;
  for (const auto& [id, d] : descendants) longest = std::max(longest, d);
  fv[Feature::kEccentricity] = static_cast<double>(longest);
  fv[Feature::kNumDescendants] = static_cast<double>(descendants.size());
  fv[Feature::kNumAscendants] = static_cast<double>(ascendants.size());
  fv[Feature::kSuccessorFunctions] =
      static_cast<double>(bfs(graph, node, Direction::kOut, EdgeFilter::kCallOnly).size());
  fv[Feature::kPredecessorFunctions] =
      static_cast<double>(bfs(graph, node, Direction::kIn, EdgeFilter::kCallOnly).size());

  const auto count_functions_with = [&](const std::map<NodeId, std::size_t>& reach,
                                        bool (*pred)(Behavior)) {
    double count = 0;
    for (const auto& [id, d] : reach)
      if (graph.find_function(id) && has_incident_behavior(graph, id, pred)) ++count;
    return count;
  };
  fv[Feature::kDescendantsWithStorage] = count_functions_with(descendants, is_storage_behavior);
  fv[Feature::kAscendantsWithStorage] = count_functions_with(ascendants, is_storage_behavior);
  fv[Feature::kDescendantsWithWebApi] = count_functions_with(descendants, is_api_behavior);
  fv[Feature::kAscendantsWithWebApi] = count_functions_with(ascendants, is_api_behavior);

  // Contextual.
  for (const auto& obs : graph.observations()) {
    if (obs.event_kind == EventKind::kNetworkRequest &&
        std::find(obs.frames.begin(), obs.frames.end(), node) != obs.frames.end())
      fv[Feature::kRequestsSent] += 1;
    if (obs.event_kind != EventKind::kDomModification || obs.frames.front() != node) continue;
    switch (obs.dom_call) {
      case DomCall::kAddEventListener: fv[Feature::kAddEventListener] += 1; break;
      case DomCall::kRemoveEventListener: fv[Feature::kRemoveEventListener] += 1; break;
      case DomCall::kGetAttribute: fv[Feature::kGetAttribute] += 1; break;
      case DomCall::kSetAttribute: fv[Feature::kSetAttribute] += 1; break;
      case DomCall::kRemoveAttribute: fv[Feature::kRemoveAttribute] += 1; break;
      case DomCall::kNone: break;
    }
  }
  fv[Feature::kParentIsEval] = fn.is_eval ? 1.0 : 0.0;
  fv[Feature::kIsGateway] = is_gateway(graph, node) ? 1.0 : 0.0;

  const auto tally = [&](const Edge& edge, NodeId activity) {
    const auto m = static_cast<double>(edge.multiplicity);
    const bool cookie = storage_mechanism_of(graph, activity) == "cookie";
    switch (edge.behavior) {
      case Behavior::kStorageGet:
        fv[cookie ? Feature::kCookieGetter : Feature::kStorageGetter] += m;
        break;
      case Behavior::kStorageSet:
        fv[cookie ? Feature::kCookieSetter : Feature::kStorageSetter] += m;
        break;
      case Behavior::kApiGet: fv[Feature::kApiGetter] += m; break;
      case Behavior::kApiSet: fv[Feature::kApiSetter] += m; break;
      default: break;
    }
  };
  for (const auto i : out) tally(graph.edges()[i], graph.edges()[i].dst);
  for (const auto i : in) tally(graph.edges()[i], graph.edges()[i].src);

  fv[Feature::kNumArgs] = static_cast<double>(fn.scope.num_args);
  fv[Feature::kNumLocal] = static_cast<double>(fn.scope.num_local);
  fv[Feature::kNumGlobal] = static_cast<double>(fn.scope.num_global);
  fv[Feature::kNumClosure] = static_cast<double>(fn.scope.num_closure);
  return fv;
}

std::vector<FeatureRow> extract_all_features(const PageGraph& graph) {
  std::vector<FeatureRow> rows;
  for (const auto& [id, fn] : function_nodes(graph)) {
    rows.push_back({graph.page_url(), id, fn.script_url, fn.function_name, fn.line, fn.column,
                    fn.context_hash, extract_features(graph, id)});
  }
  return rows;
}

std::string write_feature_matrix(const std::vector<FeatureRow>& rows) {
  std::vector<std::string> header(kKeyColumns.begin(), kKeyColumns.end());
  for (const auto& name : FeatureSchema::current().names) header.push_back(name);
  std::string out = csv::format_row(header);
  for (const auto& row : rows) {
    std::vector<std::string> fields = {row.page_url,
                                       row.node.to_hex(),
                                       row.script_url,
                                       row.function_name,
                                       std::to_string(row.line),
                                       std::to_string(row.column),
                                       NodeId{row.context_hash}.to_hex()};
    for (const auto v : row.features.values) fields.push_back(csv::format_number(v));
    out += csv::format_row(fields);
  }
  return out;
}

std::vector<FeatureRow> read_feature_matrix(std::string_view text) {
  const auto table = csv::parse(text);
  if (table.empty()) throw std::runtime_error("feature matrix: missing header");
  const auto& header = table.front();
  const auto& names = FeatureSchema::current().names;
  if (header.size() != kKeyColumns.size() + names.size())
    throw std::runtime_error("feature matrix: schema mismatch (column count)");
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string_view expected =
        i < kKeyColumns.size() ? kKeyColumns[i] : std::string_view(names[i - kKeyColumns.size()]);
    if (header[i] != expected)
      throw std::runtime_error("feature matrix: schema mismatch at column " + header[i]);
  }
  std::vector<FeatureRow> rows;
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& f = table[r];
    if (f.size() != header.size())
      throw std::runtime_error("feature matrix: row " + std::to_string(r) + " has wrong width");
    FeatureRow row;
    row.page_url = f[0];
    row.node = NodeId::from_hex(f[1]);
    row.script_url = f[2];
    row.function_name = f[3];
    row.line = parse_number<std::int64_t>(f[4]);
    row.column = parse_number<std::int64_t>(f[5]);
    row.context_hash = NodeId::from_hex(f[6]).value;
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      row.features.values[i] = parse_number<double>(f[kKeyColumns.size() + i]);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tracefn
