#include "tracefn/filterlist.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "json.hpp"
#include "tracefn/url.hpp"

namespace tracefn {

namespace {

using Json = nlohmann::ordered_json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_separator(char c) {
  const auto u = static_cast<unsigned char>(c);
  return !(std::isalnum(u) || c == '_' || c == '-' || c == '.' || c == '%');
}

std::uint32_t pack_gram(std::string_view s, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

bool parse_options(std::string_view text, RuleOptions& out) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const auto option = to_lower(trim(text.substr(pos, comma - pos)));
    pos = comma + 1;
    if (option == "third-party") {
      out.third_party = true;
    } else if (option == "~third-party") {
      out.third_party = false;
    } else if (option.rfind("domain=", 0) == 0) {
      std::string_view list = std::string_view(option).substr(7);
      if (list.empty()) return false;
      std::size_t p = 0;
      while (p <= list.size()) {
        auto bar = list.find('|', p);
        if (bar == std::string_view::npos) bar = list.size();
        auto d = list.substr(p, bar - p);
        p = bar + 1;
        if (d.empty()) return false;
        if (d.front() == '~') {
          d.remove_prefix(1);
          if (d.empty()) return false;
          out.domain_excludes.emplace(d);
        } else {
          out.domain_includes.emplace(d);
        }
      }
    } else {
      const bool negated = !option.empty() && option.front() == '~';
      const auto name = std::string_view(option).substr(negated ? 1 : 0);
      ResourceType type;
      if (name == "script") type = ResourceType::kScript;
      else if (name == "image") type = ResourceType::kImage;
      else if (name == "xmlhttprequest") type = ResourceType::kXmlHttpRequest;
      else return false;
      (negated ? out.exclude_types : out.include_types).insert(type);
    }
  }
  return true;
}

// Lowercased URL plus the offsets the matcher needs.
struct PreparedUrl {
  std::string lowered;
  std::size_t host_start = 0;
  std::size_t host_end = 0;
};

PreparedUrl prepare(std::string_view url) {
  const auto parsed = parse_url(url);
  if (!parsed) throw InvalidUrl(std::string(url));
  return {to_lower(url), parsed->host_offset, parsed->host_offset + parsed->host.size()};
}

std::string page_host(const MatchContext& ctx) {
  const auto parsed = parse_url(ctx.page_origin);
  return parsed ? parsed->host : std::string();
}

bool options_allow(const RuleOptions& o, const MatchContext& ctx, const std::string& host) {
  if (o.third_party && *o.third_party != ctx.is_third_party) return false;
  if (!o.include_types.empty() && !o.include_types.count(ctx.resource_type)) return false;
  if (o.exclude_types.count(ctx.resource_type)) return false;
  if (o.domain_includes.empty() && o.domain_excludes.empty()) return true;
  // The most specific listed domain decides.
  std::size_t best = 0;
  bool best_excluded = false;
  for (const auto& d : o.domain_includes)
    if (d.size() > best && host_matches_domain(host, d)) best = d.size();
  for (const auto& d : o.domain_excludes)
    if (d.size() >= best && host_matches_domain(host, d)) {
      best = d.size();
      best_excluded = true;
    }
  if (best_excluded) return false;
  return best > 0 || o.domain_includes.empty();
}

class PatternMatcher {
 public:
  PatternMatcher(const FilterRule& rule, std::string_view url)
      : rule_(rule), url_(url), memo_((rule.tokens.size() + 1) * (url.size() + 1), -1) {}

  bool at(std::size_t t, std::size_t p) {
    auto& slot = memo_[t * (url_.size() + 1) + p];
    if (slot < 0) slot = compute(t, p) ? 1 : 0;
    return slot == 1;
  }

 private:
  bool compute(std::size_t t, std::size_t p) {
    if (t == rule_.tokens.size()) return !rule_.end_anchor || p == url_.size();
    const auto& token = rule_.tokens[t];
    switch (token.kind) {
      case PatternToken::Kind::kLiteral:
        return url_.compare(p, token.text.size(), token.text) == 0 &&
               at(t + 1, p + token.text.size());
      case PatternToken::Kind::kSeparator:
        if (p == url_.size()) return at(t + 1, p);
        return is_separator(url_[p]) && at(t + 1, p + 1);
      case PatternToken::Kind::kWildcard:
        for (std::size_t q = p; q <= url_.size(); ++q)
          if (at(t + 1, q)) return true;
        return false;
    }
    return false;
  }

  const FilterRule& rule_;
  std::string_view url_;
  std::vector<signed char> memo_;
};

bool pattern_matches(const FilterRule& rule, const PreparedUrl& url) {
  PatternMatcher m(rule, url.lowered);
  switch (rule.anchor) {
    case StartAnchor::kStart:
      return m.at(0, 0);
    case StartAnchor::kDomain:
      if (m.at(0, url.host_start)) return true;
      for (auto i = url.host_start; i < url.host_end; ++i)
        if (url.lowered[i] == '.' && m.at(0, i + 1)) return true;
      return false;
    case StartAnchor::kNone:
      for (std::size_t p = 0; p <= url.lowered.size(); ++p)
        if (m.at(0, p)) return true;
      return false;
  }
  return false;
}

bool prepared_match(const FilterRule& rule, const PreparedUrl& url, const MatchContext& ctx,
                    const std::string& host) {
  return options_allow(rule.options, ctx, host) && pattern_matches(rule, url);
}

Decision decide(const RuleSet& rules, const std::vector<std::size_t>& order,
                const PreparedUrl& url, const MatchContext& ctx) {
  const auto host = page_host(ctx);
  std::optional<std::size_t> block;
  std::optional<std::size_t> allow;
  for (const auto i : order) {
    const auto& rule = rules.rules()[i];
    auto& slot = rule.exception ? allow : block;
    if (slot) continue;
    if (prepared_match(rule, url, ctx, host)) slot = i;
    if (allow) break;
  }
  if (allow) return {Verdict::kAllow, rules.rules()[*allow].raw};
  if (block) return {Verdict::kBlock, rules.rules()[*block].raw};
  return {};
}

}  // namespace

ResourceType parse_resource_type(std::string_view name) {
  const auto lower = to_lower(name);
  if (lower == "script") return ResourceType::kScript;
  if (lower == "image") return ResourceType::kImage;
  if (lower == "xmlhttprequest") return ResourceType::kXmlHttpRequest;
  return ResourceType::kOther;
}

std::string_view to_string(ResourceType type) {
  switch (type) {
    case ResourceType::kScript: return "script";
    case ResourceType::kImage: return "image";
    case ResourceType::kXmlHttpRequest: return "xmlhttprequest";
    case ResourceType::kOther: break;
  }
  return "other";
}

std::string_view to_string(RuleSkip reason) {
  switch (reason) {
    case RuleSkip::kComment: return "comment";
    case RuleSkip::kCosmetic: return "cosmetic";
    case RuleSkip::kUnsupportedOption: return "unsupported_option";
    case RuleSkip::kRegexRule: return "regex_rule";
    case RuleSkip::kEmpty: break;
  }
  return "empty";
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kBlock: return "block";
    case Verdict::kAllow: return "allow";
    case Verdict::kNoMatch: break;
  }
  return "no_match";
}

std::string_view to_string(Label label) {
  switch (label) {
    case Label::kTracking: return "tracking";
    case Label::kNonTracking: return "non_tracking";
    case Label::kExcluded: break;
  }
  return "excluded";
}

Label parse_label(std::string_view text) {
  if (text == "tracking") return Label::kTracking;
  if (text == "non_tracking") return Label::kNonTracking;
  if (text == "excluded") return Label::kExcluded;
  throw std::invalid_argument("unknown label: " + std::string(text));
}

std::string FilterRule::to_text() const {
  std::string out = exception ? "@@" : "";
  if (anchor == StartAnchor::kDomain) out += "||";
  if (anchor == StartAnchor::kStart) out += "|";
  for (const auto& t : tokens) {
    switch (t.kind) {
      case PatternToken::Kind::kLiteral: out += t.text; break;
      case PatternToken::Kind::kWildcard: out += '*'; break;
      case PatternToken::Kind::kSeparator: out += '^'; break;
    }
  }
  if (end_anchor) out += '|';
  std::vector<std::string> opts;
  if (options.third_party) opts.push_back(*options.third_party ? "third-party" : "~third-party");
  for (const auto t : options.include_types) opts.emplace_back(to_string(t));
  for (const auto t : options.exclude_types) opts.push_back("~" + std::string(to_string(t)));
  if (!options.domain_includes.empty() || !options.domain_excludes.empty()) {
    std::string d = "domain=";
    bool first = true;
    for (const auto& x : options.domain_includes) d += (first ? "" : "|") + x, first = false;
    for (const auto& x : options.domain_excludes) d += (first ? "~" : "|~") + x, first = false;
    opts.push_back(d);
  }
  for (std::size_t i = 0; i < opts.size(); ++i) out += (i == 0 ? "$" : ",") + opts[i];
  return out;
}

std::optional<FilterRule> parse_rule(std::string_view line, RuleSkip* reason) {
  const auto skip = [&](RuleSkip r) -> std::optional<FilterRule> {
    if (reason) *reason = r;
    return std::nullopt;
  };
  const auto text = trim(line);
  if (text.empty()) return skip(RuleSkip::kEmpty);
  if (text.front() == '!' || text.front() == '[') return skip(RuleSkip::kComment);
  for (const auto marker : {"##", "#@#", "#?#", "#$#"})
    if (text.find(marker) != std::string_view::npos) return skip(RuleSkip::kCosmetic);

  FilterRule rule;
  rule.raw = std::string(text);
  auto body = text;
  if (body.rfind("@@", 0) == 0) {
    rule.exception = true;
    body.remove_prefix(2);
  }
  if (const auto dollar = body.rfind('$'); dollar != std::string_view::npos) {
    if (!parse_options(body.substr(dollar + 1), rule.options))
      return skip(RuleSkip::kUnsupportedOption);
    body = body.substr(0, dollar);
  }
  if (body.size() >= 2 && body.front() == '/' && body.back() == '/')
    return skip(RuleSkip::kRegexRule);
  if (body.rfind("||", 0) == 0) {
    rule.anchor = StartAnchor::kDomain;
    body.remove_prefix(2);
  } else if (body.rfind("|", 0) == 0) {
    rule.anchor = StartAnchor::kStart;
    body.remove_prefix(1);
  }
  if (!body.empty() && body.back() == '|') {
    rule.end_anchor = true;
    body.remove_suffix(1);
  }
  for (const char c : body) {
    if (c == '*') {
      if (rule.tokens.empty() || rule.tokens.back().kind != PatternToken::Kind::kWildcard)
        rule.tokens.push_back({PatternToken::Kind::kWildcard, ""});
    } else if (c == '^') {
      rule.tokens.push_back({PatternToken::Kind::kSeparator, ""});
    } else {
      if (rule.tokens.empty() || rule.tokens.back().kind != PatternToken::Kind::kLiteral)
        rule.tokens.push_back({PatternToken::Kind::kLiteral, ""});
      rule.tokens.back().text += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (rule.tokens.empty() && rule.options == RuleOptions{} && rule.anchor == StartAnchor::kNone)
    return skip(RuleSkip::kEmpty);
  return rule;
}

void RuleSet::add(FilterRule rule) {
  const auto index = rules_.size();
  std::optional<std::uint32_t> best;
  std::size_t best_load = 0;
  for (const auto& t : rule.tokens) {
    if (t.kind != PatternToken::Kind::kLiteral) continue;
    for (std::size_t i = 0; i + 4 <= t.text.size(); ++i) {
      const auto gram = pack_gram(t.text, i);
      const auto it = buckets_.find(gram);
      const auto load = it == buckets_.end() ? 0 : it->second.size();
      if (!best || load < best_load) {
        best = gram;
        best_load = load;
      }
    }
  }
  if (best) buckets_[*best].push_back(index);
  else unindexed_.push_back(index);
  rules_.push_back(std::move(rule));
}

std::size_t RuleSet::block_count() const {
  return static_cast<std::size_t>(
      std::count_if(rules_.begin(), rules_.end(), [](const auto& r) { return !r.exception; }));
}

std::size_t RuleSet::exception_count() const { return rules_.size() - block_count(); }

std::size_t RuleSet::skipped(RuleSkip reason) const {
  return static_cast<std::size_t>(std::count_if(
      diagnostics_.begin(), diagnostics_.end(), [&](const auto& d) { return d.reason == reason; }));
}

std::vector<std::size_t> RuleSet::candidates(std::string_view lowered_url) const {
  std::vector<std::size_t> out = unindexed_;
  for (std::size_t i = 0; i + 4 <= lowered_url.size(); ++i) {
    const auto it = buckets_.find(pack_gram(lowered_url, i));
    if (it != buckets_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

RuleSet parse_rules(std::string_view text) {
  RuleSet set;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    RuleSkip reason = RuleSkip::kEmpty;
    if (auto rule = parse_rule(line, &reason)) {
      set.add(std::move(*rule));
    } else if (reason != RuleSkip::kEmpty) {
      set.add_diagnostic({line_no, reason, std::string(trim(line))});
    }
  }
  return set;
}

MatchContext request_context(const NetworkRequest& request) {
  return {request.page_origin, parse_resource_type(request.resource_type),
          is_third_party(request.url, request.page_origin)};
}

bool rule_matches(const FilterRule& rule, std::string_view url, const MatchContext& ctx) {
  return prepared_match(rule, prepare(url), ctx, page_host(ctx));
}

Decision match(const RuleSet& rules, std::string_view url, const MatchContext& ctx) {
  const auto prepared = prepare(url);
  return decide(rules, rules.candidates(prepared.lowered), prepared, ctx);
}

Decision match_linear(const RuleSet& rules, std::string_view url, const MatchContext& ctx) {
  const auto prepared = prepare(url);
  std::vector<std::size_t> all(rules.rules().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return decide(rules, all, prepared, ctx);
}

std::vector<RequestLabel> label_requests(const TraceLog& log, const PageGraph& graph,
                                         const RuleSet& rules) {
  std::vector<RequestLabel> out;
  for (const auto& obs : graph.observations()) {
    if (obs.event_kind != EventKind::kNetworkRequest) continue;
    if (obs.event_index >= log.events.size())
      throw std::invalid_argument("graph observation outside the trace log");
    const auto* request = std::get_if<NetworkRequest>(&log.events[obs.event_index].payload);
    if (!request) throw std::invalid_argument("graph observation does not match the trace log");
    auto copy = *request;
    if (copy.page_origin.empty()) copy.page_origin = log.page_url;
    RequestLabel label{obs.event_index, request->url, {}};
    try {
      label.decision = match(rules, copy.url, request_context(copy));
    } catch (const InvalidUrl&) {
    }
    out.push_back(std::move(label));
  }
  return out;
}

std::vector<FunctionLabel> label_functions(const TraceLog& log, const PageGraph& graph,
                                           const RuleSet& rules) {
  const auto requests = label_requests(log, graph, rules);
  std::map<std::size_t, const RequestLabel*> by_event;
  for (const auto& r : requests) by_event[r.event_index] = &r;

  std::map<NodeId, FunctionLabel> acc;
  for (const auto& obs : graph.observations()) {
    if (obs.event_kind != EventKind::kNetworkRequest) continue;
    const auto& request = *by_event.at(obs.event_index);
    std::set<NodeId> seen(obs.frames.begin(), obs.frames.end());
    for (const auto id : seen) {
      auto& label = acc[id];
      if (request.tracking()) {
        ++label.tracking_requests;
        if (!label.matched_rule) label.matched_rule = request.decision.matched_rule;
      } else {
        ++label.non_tracking_requests;
      }
    }
  }
  std::vector<FunctionLabel> out;
  for (const auto& [id, fn] : function_nodes(graph)) {
    FunctionLabel label;
    if (const auto it = acc.find(id); it != acc.end()) label = it->second;
    label.node = id;
    if (label.non_tracking_requests > 0) label.label = Label::kNonTracking;
    else if (label.tracking_requests > 0) label.label = Label::kTracking;
    else label.label = Label::kExcluded;
    if (label.label != Label::kTracking) label.matched_rule.reset();
    out.push_back(std::move(label));
  }
  return out;
}

std::string write_labels(const PageGraph& graph, const std::vector<FunctionLabel>& labels) {
  std::string out;
  for (const auto& label : labels) {
    const auto* fn = graph.find_function(label.node);
    if (!fn) throw std::invalid_argument("label for unknown node " + label.node.to_hex());
    Json record;
    record["node_id"] = label.node.to_hex();
    record["script_url"] = fn->script_url;
    record["function_name"] = fn->function_name;
    record["line"] = fn->line;
    record["column"] = fn->column;
    record["label"] = to_string(label.label);
    record["tracking_requests"] = label.tracking_requests;
    record["non_tracking_requests"] = label.non_tracking_requests;
    record["matched_rule"] = label.matched_rule ? Json(*label.matched_rule) : Json(nullptr);
    out += record.dump() + "\n";
  }
  return out;
}

std::map<NodeId, FunctionLabel> read_labels(std::string_view text) {
  std::map<NodeId, FunctionLabel> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto record = Json::parse(line);
      FunctionLabel label;
      label.node = NodeId::from_hex(record.at("node_id").get<std::string>());
      label.label = parse_label(record.at("label").get<std::string>());
      label.tracking_requests = record.value("tracking_requests", std::size_t{0});
      label.non_tracking_requests = record.value("non_tracking_requests", std::size_t{0});
      if (record.contains("matched_rule") && record["matched_rule"].is_string())
        label.matched_rule = record["matched_rule"].get<std::string>();
      out[label.node] = std::move(label);
    } catch (const std::exception& e) {
      throw std::runtime_error("labels line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace tracefn
