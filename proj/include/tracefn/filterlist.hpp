#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tracefn/graph.hpp"
#include "tracefn/trace.hpp"

namespace tracefn {

enum class ResourceType { kOther, kScript, kImage, kXmlHttpRequest };

// Unknown or empty names map to kOther.
ResourceType parse_resource_type(std::string_view name);
std::string_view to_string(ResourceType type);

struct PatternToken {
  enum class Kind { kLiteral, kWildcard, kSeparator };
  Kind kind = Kind::kLiteral;
  std::string text;  // lowercase; literals only

  bool operator==(const PatternToken&) const = default;
};

enum class StartAnchor { kNone, kDomain, kStart };

struct RuleOptions {
  std::optional<bool> third_party;
  std::set<ResourceType> include_types;
  std::set<ResourceType> exclude_types;
  std::set<std::string> domain_includes;
  std::set<std::string> domain_excludes;

  bool operator==(const RuleOptions&) const = default;
};

struct FilterRule {
  std::string raw;
  bool exception = false;
  StartAnchor anchor = StartAnchor::kNone;
  bool end_anchor = false;
  std::vector<PatternToken> tokens;
  RuleOptions options;

  // Canonical rule text; parses back to an equal rule (modulo raw).
  std::string to_text() const;
};

enum class RuleSkip { kComment, kCosmetic, kUnsupportedOption, kRegexRule, kEmpty };
std::string_view to_string(RuleSkip reason);

struct RuleDiagnostic {
  std::size_t line_no = 0;
  RuleSkip reason = RuleSkip::kComment;
  std::string text;
};

struct MatchContext {
  std::string page_origin;
  ResourceType resource_type = ResourceType::kOther;
  bool is_third_party = false;
};

// Context for a recorded request: third-party by registrable domain of the
// request URL against page_origin.
MatchContext request_context(const NetworkRequest& request);

enum class Verdict { kBlock, kAllow, kNoMatch };
std::string_view to_string(Verdict verdict);

struct Decision {
  Verdict verdict = Verdict::kNoMatch;
  std::optional<std::string> matched_rule;

  bool operator==(const Decision&) const = default;
};

// True when `rule` fires for `url` under `ctx`, ignoring its exception flag.
bool rule_matches(const FilterRule& rule, std::string_view url, const MatchContext& ctx);

class RuleSet {
 public:
  RuleSet() = default;

  // Rules in file order, block and exception interleaved.
  const std::vector<FilterRule>& rules() const { return rules_; }
  const std::vector<RuleDiagnostic>& diagnostics() const { return diagnostics_; }
  std::size_t block_count() const;
  std::size_t exception_count() const;
  std::size_t skipped(RuleSkip reason) const;

  void add(FilterRule rule);
  void add_diagnostic(RuleDiagnostic d) { diagnostics_.push_back(std::move(d)); }

  // Indices of rules that may match `lowered_url`, ascending.
  std::vector<std::size_t> candidates(std::string_view lowered_url) const;

 private:
  std::vector<FilterRule> rules_;
  std::vector<RuleDiagnostic> diagnostics_;
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> buckets_;
  std::vector<std::size_t> unindexed_;
};

// Parses a single rule line; nullopt with `reason` set when skipped.
std::optional<FilterRule> parse_rule(std::string_view line, RuleSkip* reason = nullptr);
RuleSet parse_rules(std::string_view text);

// Throws InvalidUrl for non-absolute URLs.
Decision match(const RuleSet& rules, std::string_view url, const MatchContext& ctx);
// Same verdict without the index; used to cross-check it.
Decision match_linear(const RuleSet& rules, std::string_view url, const MatchContext& ctx);

enum class Label { kTracking, kNonTracking, kExcluded };
std::string_view to_string(Label label);
Label parse_label(std::string_view text);

struct FunctionLabel {
  NodeId node;
  Label label = Label::kExcluded;
  std::size_t tracking_requests = 0;
  std::size_t non_tracking_requests = 0;
  // First block rule among the node's tracking requests.
  std::optional<std::string> matched_rule;

  bool operator==(const FunctionLabel&) const = default;
};

struct RequestLabel {
  std::size_t event_index = 0;
  std::string url;
  Decision decision;
  bool tracking() const { return decision.verdict == Verdict::kBlock; }
};

// Per-request verdicts for every network observation in the graph. Requests
// with unparseable URLs are non-tracking.
std::vector<RequestLabel> label_requests(const TraceLog& log, const PageGraph& graph,
                                         const RuleSet& rules);

// One label per function node, in function_nodes() order.
std::vector<FunctionLabel> label_functions(const TraceLog& log, const PageGraph& graph,
                                           const RuleSet& rules);

// JSON lines, one record per function node.
std::string write_labels(const PageGraph& graph, const std::vector<FunctionLabel>& labels);
std::map<NodeId, FunctionLabel> read_labels(std::string_view text);

}  // namespace tracefn
