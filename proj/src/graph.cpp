#include "tracefn/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace tracefn {

namespace {

using nlohmann::ordered_json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

class Fnv1a {
 public:
  Fnv1a& bytes(std::string_view data) {
    for (unsigned char c : data) {
      state_ ^= c;
      state_ *= kFnvPrime;
    }
    return *this;
  }
  // Length-prefixed so ("ab","c") and ("a","bc") differ.
  Fnv1a& field(std::string_view data) {
    number(static_cast<std::uint64_t>(data.size()));
    return bytes(data);
  }
  Fnv1a& number(std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (value >> (8 * i)) & 0xFF;
      state_ *= kFnvPrime;
    }
    return *this;
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kFnvOffset;
};

constexpr std::pair<ActivityKind, const char*> kActivityNames[] = {
    {ActivityKind::kDomElement, "dom_element"},
    {ActivityKind::kNetwork, "network"},
    {ActivityKind::kStorage, "storage"},
    {ActivityKind::kWebApi, "web_api"}};
constexpr std::pair<EdgeKind, const char*> kEdgeKindNames[] = {
    {EdgeKind::kCall, "call"}, {EdgeKind::kBehavioral, "behavioral"}};
constexpr std::pair<Behavior, const char*> kBehaviorNames[] = {
    {Behavior::kNone, "none"},
    {Behavior::kRequest, "request"},
    {Behavior::kDom, "dom"},
    {Behavior::kStorageGet, "storage_get"},
    {Behavior::kStorageSet, "storage_set"},
    {Behavior::kApiGet, "api_get"},
    {Behavior::kApiSet, "api_set"}};
constexpr std::pair<EventKind, const char*> kEventNames[] = {
    {EventKind::kNetworkRequest, "network_request"},
    {EventKind::kDomModification, "dom_modification"},
    {EventKind::kStorageAccess, "storage_access"},
    {EventKind::kWebApiCall, "web_api_call"}};
constexpr std::pair<DomCall, const char*> kDomCallNames[] = {
    {DomCall::kNone, ""},
    {DomCall::kSetAttribute, "setAttribute"},
    {DomCall::kGetAttribute, "getAttribute"},
    {DomCall::kRemoveAttribute, "removeAttribute"},
    {DomCall::kAddEventListener, "addEventListener"},
    {DomCall::kRemoveEventListener, "removeEventListener"}};

template <typename Enum, std::size_t N>
const char* name_of(Enum value, const std::pair<Enum, const char*> (&table)[N]) {
  for (const auto& [v, name] : table)
    if (v == value) return name;
  return "?";
}

template <typename Enum, std::size_t N>
Enum value_of(const std::string& name, const std::pair<Enum, const char*> (&table)[N]) {
  for (const auto& [v, n] : table)
    if (name == n) return v;
  throw std::runtime_error("graph dump: unknown enum value '" + name + "'");
}

ActivityNode activity_for(const EventPayload& payload) {
  return std::visit(
      [](const auto& p) -> ActivityNode {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NetworkRequest>) {
          return {ActivityKind::kNetwork, p.url};
        } else if constexpr (std::is_same_v<T, DomModification>) {
          return {ActivityKind::kDomElement, p.target_selector};
        } else if constexpr (std::is_same_v<T, StorageAccess>) {
          return {ActivityKind::kStorage, std::string(to_string(p.mechanism)) + ":" + p.key};
        } else {
          return {ActivityKind::kWebApi, p.api_name};
        }
      },
      payload);
}

DomCall effective_dom_call(const DomModification& mod) {
  if (mod.dom_call != DomCall::kNone) return mod.dom_call;
  return mod.mutation_kind == MutationKind::kAttribute ? DomCall::kSetAttribute
                                                       : DomCall::kNone;
}

const std::vector<std::size_t>& empty_indices() {
  static const std::vector<std::size_t> empty;
  return empty;
}

}  // namespace

std::string NodeId::to_hex() const {
  char buffer[17];
  std::snprintf(buffer, sizeof buffer, "%016llx", static_cast<unsigned long long>(value));
  return buffer;
}

NodeId NodeId::from_hex(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) throw std::runtime_error("bad node id: " + std::string(hex));
  std::uint64_t value = 0;
  for (char c : hex) {
    value <<= 4;
    if (c >= '0' && c <= '9') value |= static_cast<std::uint64_t>(c - '0');
    else if (c >= 'a' && c <= 'f') value |= static_cast<std::uint64_t>(c - 'a' + 10);
    else throw std::runtime_error("bad node id: " + std::string(hex));
  }
  return NodeId{value};
}

std::string_view to_string(ActivityKind kind) { return name_of(kind, kActivityNames); }
std::string_view to_string(EdgeKind kind) { return name_of(kind, kEdgeKindNames); }
std::string_view to_string(Behavior behavior) { return name_of(behavior, kBehaviorNames); }

std::uint64_t caller_context_hash(const std::vector<StackFrame>& stack, std::size_t first) {
  Fnv1a h;
  for (std::size_t i = first; i < stack.size(); ++i) {
    const auto& f = stack[i];
    h.field(f.script_url).field(f.function_name);
    h.number(static_cast<std::uint64_t>(f.line)).number(static_cast<std::uint64_t>(f.column));
  }
  return h.digest();
}

NodeId function_node_id(const FunctionNode& node) {
  Fnv1a h;
  h.field("function").field(node.script_url).field(node.function_name);
  h.number(static_cast<std::uint64_t>(node.line)).number(static_cast<std::uint64_t>(node.column));
  h.number(static_cast<std::uint64_t>(node.scope.num_args));
  h.number(static_cast<std::uint64_t>(node.scope.num_local));
  h.number(static_cast<std::uint64_t>(node.scope.num_global));
  h.number(static_cast<std::uint64_t>(node.scope.num_closure));
  h.number(node.context_hash);
  return NodeId{h.digest()};
}

NodeId activity_node_id(const ActivityNode& node) {
  Fnv1a h;
  h.field("activity").field(name_of(node.kind, kActivityNames)).field(node.attribute);
  return NodeId{h.digest()};
}

const GraphNode* PageGraph::find(NodeId id) const {
  const auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const FunctionNode* PageGraph::find_function(NodeId id) const {
  const auto* node = find(id);
  return node ? std::get_if<FunctionNode>(node) : nullptr;
}

const std::vector<std::size_t>& PageGraph::out_edges(NodeId id) const {
  const auto it = out_.find(id);
  return it == out_.end() ? empty_indices() : it->second;
}

const std::vector<std::size_t>& PageGraph::in_edges(NodeId id) const {
  const auto it = in_.find(id);
  return it == in_.end() ? empty_indices() : it->second;
}

void PageGraph::rebuild_adjacency() {
  out_.clear();
  in_.clear();
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    out_[edges_[i].src].push_back(i);
    in_[edges_[i].dst].push_back(i);
  }
}

bool PageGraph::operator==(const PageGraph& other) const {
  if (page_url_ != other.page_url_ || skipped_events_ != other.skipped_events_ ||
      observations_ != other.observations_ || edges_.size() != other.edges_.size() ||
      nodes_.size() != other.nodes_.size())
    return false;
  for (std::size_t i = 0; i < edges_.size(); ++i)
    if (edges_[i].key() != other.edges_[i].key() ||
        edges_[i].multiplicity != other.edges_[i].multiplicity)
      return false;
  auto a = nodes_.begin();
  auto b = other.nodes_.begin();
  for (; a != nodes_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.index() != b->second.index()) return false;
    if (const auto* fa = std::get_if<FunctionNode>(&a->second)) {
      const auto& fb = std::get<FunctionNode>(b->second);
      if (fa->identity() != fb.identity() || fa->is_eval != fb.is_eval ||
          fa->is_inline != fb.is_inline)
        return false;
    } else if (std::get<ActivityNode>(a->second).identity() !=
               std::get<ActivityNode>(b->second).identity()) {
      return false;
    }
  }
  return true;
}

GraphAssembler::GraphAssembler(std::string page_url) { graph_.page_url_ = std::move(page_url); }

void GraphAssembler::add_node(NodeId id, GraphNode node) {
  const auto [it, inserted] = graph_.nodes_.try_emplace(id, node);
  if (inserted) return;
  const bool same = std::visit(
      [&](const auto& existing) {
        using T = std::decay_t<decltype(existing)>;
        const auto* incoming = std::get_if<T>(&node);
        return incoming && incoming->identity() == existing.identity();
      },
      it->second);
  if (!same) throw std::logic_error("node id collision at " + id.to_hex());
}

NodeId GraphAssembler::add_function(const FunctionNode& node) {
  const auto id = function_node_id(node);
  add_node(id, node);
  return id;
}

NodeId GraphAssembler::add_activity(const ActivityNode& node) {
  const auto id = activity_node_id(node);
  add_node(id, node);
  return id;
}

void GraphAssembler::add_edge(NodeId src, NodeId dst, EdgeKind kind, Behavior behavior,
                              std::int64_t multiplicity) {
  edge_counts_[{src, dst, kind, behavior}] += multiplicity;
}

void GraphAssembler::add_observation(StackObservation observation) {
  graph_.observations_.push_back(std::move(observation));
}

PageGraph GraphAssembler::finish() && {
  graph_.edges_.clear();
  graph_.edges_.reserve(edge_counts_.size());
  for (const auto& [key, count] : edge_counts_) {
    const auto& [src, dst, kind, behavior] = key;
    if (!graph_.nodes_.count(src) || !graph_.nodes_.count(dst))
      throw std::logic_error("dangling edge endpoint");
    graph_.edges_.push_back({src, dst, kind, behavior, count});
  }
  graph_.rebuild_adjacency();
  return std::move(graph_);
}

PageGraph build_graph(const TraceLog& log) {
  GraphAssembler assembler(log.page_url);
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& event = log.events[i];
    const auto& stack = event.call_stack;
    if (stack.empty()) {
      assembler.count_skipped();
      continue;
    }

    StackObservation observation;
    observation.event_index = i;
    observation.event_kind = event.kind();
    for (std::size_t j = 0; j < stack.size(); ++j) {
      const auto& frame = stack[j];
      FunctionNode node{frame.script_url, frame.function_name, frame.line, frame.column,
                        frame.scope, caller_context_hash(stack, j + 1), frame.is_eval,
                        frame.is_inline};
      observation.frames.push_back(assembler.add_function(node));
    }
    for (std::size_t j = 0; j + 1 < stack.size(); ++j)
      assembler.add_edge(observation.frames[j + 1], observation.frames[j], EdgeKind::kCall,
                         Behavior::kNone);

    const auto initiator = observation.frames.front();
    const auto activity = assembler.add_activity(activity_for(event.payload));
    observation.activity = activity;
    const auto outgoing = [&](Behavior b) {
      assembler.add_edge(initiator, activity, EdgeKind::kBehavioral, b);
    };
    const auto incoming = [&](Behavior b) {
      assembler.add_edge(activity, initiator, EdgeKind::kBehavioral, b);
    };

    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, NetworkRequest>) {
            outgoing(Behavior::kRequest);
          } else if constexpr (std::is_same_v<T, DomModification>) {
            observation.dom_call = effective_dom_call(p);
            if (observation.dom_call == DomCall::kGetAttribute) incoming(Behavior::kDom);
            else outgoing(Behavior::kDom);
          } else if constexpr (std::is_same_v<T, StorageAccess>) {
            if (p.mode == AccessMode::kSet) outgoing(Behavior::kStorageSet);
            else incoming(Behavior::kStorageGet);
          } else {
            if (p.mode == AccessMode::kSet) outgoing(Behavior::kApiSet);
            else incoming(Behavior::kApiGet);
            if (!p.target_selector.empty()) {
              const auto element =
                  assembler.add_activity({ActivityKind::kDomElement, p.target_selector});
              assembler.add_edge(element, initiator, EdgeKind::kBehavioral, Behavior::kDom);
            }
          }
        },
        event.payload);
    assembler.add_observation(std::move(observation));
  }
  return std::move(assembler).finish();
}

std::vector<std::pair<NodeId, FunctionNode>> function_nodes(const PageGraph& graph) {
  std::vector<std::pair<NodeId, FunctionNode>> out;
  for (const auto& [id, node] : graph.nodes())
    if (const auto* fn = std::get_if<FunctionNode>(&node)) out.emplace_back(id, *fn);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::forward_as_tuple(a.second.identity(), a.first) <
           std::forward_as_tuple(b.second.identity(), b.first);
  });
  return out;
}

std::string dump_graph(const PageGraph& graph) {
  ordered_json doc;
  doc["page_url"] = graph.page_url();
  doc["skipped_events"] = graph.skipped_events();
  doc["nodes"] = ordered_json::array();
  for (const auto& [id, node] : graph.nodes()) {
    ordered_json entry;
    entry["id"] = id.to_hex();
    if (const auto* fn = std::get_if<FunctionNode>(&node)) {
      entry["type"] = "function";
      entry["script_url"] = fn->script_url;
      entry["function_name"] = fn->function_name;
      entry["line"] = fn->line;
      entry["column"] = fn->column;
      entry["scope"] = {fn->scope.num_args, fn->scope.num_local, fn->scope.num_global,
                        fn->scope.num_closure};
      entry["context_hash"] = NodeId{fn->context_hash}.to_hex();
      entry["is_eval"] = fn->is_eval;
      entry["is_inline"] = fn->is_inline;
    } else {
      const auto& act = std::get<ActivityNode>(node);
      entry["type"] = name_of(act.kind, kActivityNames);
      entry["attribute"] = act.attribute;
    }
    doc["nodes"].push_back(std::move(entry));
  }
  doc["edges"] = ordered_json::array();
  for (const auto& edge : graph.edges()) {
    doc["edges"].push_back({{"src", edge.src.to_hex()},
                            {"dst", edge.dst.to_hex()},
                            {"kind", name_of(edge.kind, kEdgeKindNames)},
                            {"behavior", name_of(edge.behavior, kBehaviorNames)},
                            {"multiplicity", edge.multiplicity}});
  }
  doc["observations"] = ordered_json::array();
  for (const auto& obs : graph.observations()) {
    ordered_json entry;
    entry["event_index"] = obs.event_index;
    entry["event_kind"] = name_of(obs.event_kind, kEventNames);
    entry["frames"] = ordered_json::array();
    for (const auto& f : obs.frames) entry["frames"].push_back(f.to_hex());
    entry["activity"] = obs.activity.to_hex();
    if (obs.dom_call != DomCall::kNone) entry["dom_call"] = name_of(obs.dom_call, kDomCallNames);
    doc["observations"].push_back(std::move(entry));
  }
  return doc.dump(1) + "\n";
}

PageGraph load_graph(std::string_view text) {
  const auto doc = ordered_json::parse(text);
  GraphAssembler assembler(doc.at("page_url").get<std::string>());
  assembler.count_skipped(doc.value("skipped_events", std::size_t{0}));
  for (const auto& entry : doc.at("nodes")) {
    const auto id = NodeId::from_hex(entry.at("id").get<std::string>());
    const auto type = entry.at("type").get<std::string>();
    if (type == "function") {
      FunctionNode fn;
      fn.script_url = entry.at("script_url").get<std::string>();
      fn.function_name = entry.at("function_name").get<std::string>();
      fn.line = entry.at("line").get<std::int64_t>();
      fn.column = entry.at("column").get<std::int64_t>();
      const auto& scope = entry.at("scope");
      fn.scope = {scope.at(0).get<std::int64_t>(), scope.at(1).get<std::int64_t>(),
                  scope.at(2).get<std::int64_t>(), scope.at(3).get<std::int64_t>()};
      fn.context_hash = NodeId::from_hex(entry.at("context_hash").get<std::string>()).value;
      fn.is_eval = entry.value("is_eval", false);
      fn.is_inline = entry.value("is_inline", false);
      assembler.add_node(id, fn);
    } else {
      assembler.add_node(id, ActivityNode{value_of(type, kActivityNames),
                                          entry.at("attribute").get<std::string>()});
    }
  }
  for (const auto& entry : doc.at("edges")) {
    assembler.add_edge(NodeId::from_hex(entry.at("src").get<std::string>()),
                       NodeId::from_hex(entry.at("dst").get<std::string>()),
                       value_of(entry.at("kind").get<std::string>(), kEdgeKindNames),
                       value_of(entry.at("behavior").get<std::string>(), kBehaviorNames),
                       entry.at("multiplicity").get<std::int64_t>());
  }
  for (const auto& entry : doc.at("observations")) {
    StackObservation obs;
    obs.event_index = entry.at("event_index").get<std::size_t>();
    obs.event_kind = value_of(entry.at("event_kind").get<std::string>(), kEventNames);
    for (const auto& f : entry.at("frames")) obs.frames.push_back(NodeId::from_hex(f.get<std::string>()));
    obs.activity = NodeId::from_hex(entry.at("activity").get<std::string>());
    obs.dom_call = value_of(entry.value("dom_call", std::string()), kDomCallNames);
    assembler.add_observation(std::move(obs));
  }
  return std::move(assembler).finish();
}

}  // namespace tracefn
