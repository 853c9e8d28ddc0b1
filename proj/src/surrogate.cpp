#include "tracefn/surrogate.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tracefn/url.hpp"

namespace tracefn {

namespace {

using Json = nlohmann::ordered_json;

enum class Cls : unsigned char { kCode, kString, kComment, kRegex };

struct Lexed {
  std::vector<Cls> cls;
  bool terminated = true;
};

bool is_ident_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '$' || u >= 0x80;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Length of the line terminator starting at i, or 0.
std::size_t terminator_at(std::string_view s, std::size_t i) {
  if (i >= s.size()) return 0;
  if (s[i] == '\n') return 1;
  if (s[i] == '\r') return i + 1 < s.size() && s[i + 1] == '\n' ? 2 : 1;
  if (static_cast<unsigned char>(s[i]) == 0xE2 && i + 2 < s.size() &&
      static_cast<unsigned char>(s[i + 1]) == 0x80 &&
      (static_cast<unsigned char>(s[i + 2]) == 0xA8 || static_cast<unsigned char>(s[i + 2]) == 0xA9))
    return 3;
  return 0;
}

bool regex_keyword(std::string_view word) {
  static const std::set<std::string_view> kWords = {
      "return", "typeof", "case", "do", "else", "in", "instanceof", "new",
      "delete", "void", "throw", "yield", "await", "of"};
  return kWords.count(word) > 0;
}

// Single forward pass classifying every byte. Template substitutions are
// code; their "${" and closing "}" count as string bytes.
Lexed lex(std::string_view s) {
  const auto n = s.size();
  Lexed out{std::vector<Cls>(n, Cls::kCode), true};
  std::vector<int> substitutions;  // open-brace depth per active ${...}
  enum class Prev { kNone, kPunct, kWord, kOperand };
  Prev prev = Prev::kNone;
  std::size_t prev_at = 0;
  std::string_view prev_word;

  const auto mark = [&](std::size_t from, std::size_t to, Cls c) {
    for (auto k = from; k < to && k < n; ++k) out.cls[k] = c;
  };
  // Scans template text from j; returns the index after the closing backtick
  // or after an opening "${".
  const auto template_text = [&](std::size_t j) {
    const auto start = j;
    while (j < n) {
      if (s[j] == '\\') {
        j += 2;
      } else if (s[j] == '`') {
        mark(start, j + 1, Cls::kString);
        prev = Prev::kOperand;
        return j + 1;
      } else if (s[j] == '$' && j + 1 < n && s[j + 1] == '{') {
        mark(start, j + 2, Cls::kString);
        substitutions.push_back(0);
        prev = Prev::kPunct;
        prev_at = j + 1;
        return j + 2;
      } else {
        ++j;
      }
    }
    mark(start, n, Cls::kString);
    out.terminated = false;
    return n;
  };
  const auto regex_allowed = [&] {
    switch (prev) {
      case Prev::kNone: return true;
      case Prev::kOperand: return false;
      case Prev::kWord: return regex_keyword(prev_word);
      case Prev::kPunct: break;
    }
    const char c = s[prev_at];
    if (c == ')' || c == ']') return false;
    if ((c == '+' || c == '-') && prev_at > 0 && s[prev_at - 1] == c) return false;
    return true;
  };

  std::size_t i = 0;
  while (i < n) {
    const char c = s[i];
    if (is_space(c) || terminator_at(s, i) == 3) {
      i += terminator_at(s, i) == 3 ? 3 : 1;
      continue;
    }
    const char next = i + 1 < n ? s[i + 1] : '\0';
    if (c == '/' && next == '/') {
      auto j = i;
      while (j < n && !terminator_at(s, j)) ++j;
      mark(i, j, Cls::kComment);
      i = j;
      continue;
    }
    if (c == '/' && next == '*') {
      const auto close = s.find("*/", i + 2);
      const auto end = close == std::string_view::npos ? n : close + 2;
      if (close == std::string_view::npos) out.terminated = false;
      mark(i, end, Cls::kComment);
      i = end;
      continue;
    }
    if (c == '\'' || c == '"') {
      auto j = i + 1;
      bool closed = false;
      while (j < n) {
        if (s[j] == '\\') {
          j += 1 + std::max<std::size_t>(1, terminator_at(s, j + 1));
          continue;
        }
        if (s[j] == c) {
          closed = true;
          break;
        }
        if (terminator_at(s, j)) break;
        ++j;
      }
      if (!closed) out.terminated = false;
      mark(i, closed ? j + 1 : j, Cls::kString);
      i = closed ? j + 1 : j;
      prev = Prev::kOperand;
      continue;
    }
    if (c == '`') {
      out.cls[i] = Cls::kString;
      i = template_text(i + 1);
      continue;
    }
    if (c == '}' && !substitutions.empty() && substitutions.back() == 0) {
      substitutions.pop_back();
      out.cls[i] = Cls::kString;
      i = template_text(i + 1);
      continue;
    }
    if (c == '/' && regex_allowed()) {
      auto j = i + 1;
      bool in_class = false, closed = false;
      while (j < n) {
        if (terminator_at(s, j)) break;
        if (s[j] == '\\') {
          j += 2;
          continue;
        }
        if (s[j] == '[') in_class = true;
        else if (s[j] == ']') in_class = false;
        else if (s[j] == '/' && !in_class) {
          closed = true;
          break;
        }
        ++j;
      }
      if (!closed) {
        out.terminated = false;
        mark(i, std::min(j, n), Cls::kRegex);
        i = std::min(j, n);
        continue;
      }
      ++j;
      while (j < n && is_ident_byte(s[j])) ++j;
      mark(i, j, Cls::kRegex);
      i = j;
      prev = Prev::kOperand;
      continue;
    }
    if (is_ident_byte(c)) {
      auto j = i;
      const bool number = std::isdigit(static_cast<unsigned char>(c));
      while (j < n && (is_ident_byte(s[j]) || (number && s[j] == '.'))) ++j;
      prev = number ? Prev::kOperand : Prev::kWord;
      prev_word = s.substr(i, j - i);
      i = j;
      continue;
    }
    if (!substitutions.empty()) {
      if (c == '{') ++substitutions.back();
      else if (c == '}') --substitutions.back();
    }
    prev = Prev::kPunct;
    prev_at = i;
    ++i;
  }
  if (!substitutions.empty()) out.terminated = false;
  return out;
}

class Extent {
 public:
  Extent(std::string_view s, const Lexed& lexed) : s_(s), cls_(lexed.cls) {}

  bool code(std::size_t i) const { return i < s_.size() && cls_[i] == Cls::kCode; }

  // Next significant code byte at or after i, skipping whitespace/comments.
  std::size_t next_sig(std::size_t i) const {
    while (i < s_.size()) {
      if (cls_[i] == Cls::kComment || (cls_[i] == Cls::kCode && is_space(s_[i]))) ++i;
      else if (cls_[i] == Cls::kCode && terminator_at(s_, i) == 3) i += 3;
      else return i;
    }
    return std::string_view::npos;
  }

  // Previous significant byte strictly before i.
  std::size_t prev_sig(std::size_t i) const {
    while (i > 0) {
      --i;
      if (cls_[i] == Cls::kComment || (cls_[i] == Cls::kCode && is_space(s_[i]))) continue;
      if (cls_[i] == Cls::kCode && i >= 2 && terminator_at(s_, i - 2) == 3) {
        i -= 2;
        continue;
      }
      return i;
    }
    return std::string_view::npos;
  }

  // Index of the bracket closing the one at `open`.
  std::size_t match_forward(std::size_t open) const {
    std::vector<char> expect;
    for (auto j = open; j < s_.size(); ++j) {
      if (!code(j)) continue;
      switch (s_[j]) {
        case '(': expect.push_back(')'); break;
        case '[': expect.push_back(']'); break;
        case '{': expect.push_back('}'); break;
        case ')':
        case ']':
        case '}':
          if (expect.empty() || expect.back() != s_[j])
            throw UnbalancedExtent("mismatched '" + std::string(1, s_[j]) + "' in call extent");
          expect.pop_back();
          if (expect.empty()) return j;
          break;
        default: break;
      }
    }
    throw UnbalancedExtent("call extent runs past the end of the source");
  }

  std::size_t match_back(std::size_t close) const {
    std::vector<char> expect;
    for (auto j = close + 1; j-- > 0;) {
      if (!code(j)) continue;
      switch (s_[j]) {
        case ')': expect.push_back('('); break;
        case ']': expect.push_back('['); break;
        case '}': expect.push_back('{'); break;
        case '(':
        case '[':
        case '{':
          if (expect.empty() || expect.back() != s_[j]) return std::string_view::npos;
          expect.pop_back();
          if (expect.empty()) return j;
          break;
        default: break;
      }
    }
    return std::string_view::npos;
  }

  std::size_t ident_start(std::size_t last) const {
    auto b = last;
    while (b > 0 && code(b - 1) && is_ident_byte(s_[b - 1])) --b;
    return b;
  }

  // Leftmost start of the member-expression operand ending at q, or npos.
  std::size_t operand_back(std::size_t q) const {
    static const std::set<std::string_view> kControl = {"if", "while", "for", "switch", "catch",
                                                        "with"};
    std::vector<std::pair<std::size_t, char>> parts;  // start, kind
    while (q != std::string_view::npos && code(q)) {
      const char c = s_[q];
      if (c == ')' || c == ']') {
        const auto o = match_back(q);
        if (o == std::string_view::npos) break;
        parts.emplace_back(o, c);
        q = prev_sig(o);
        continue;
      }
      if (is_ident_byte(c)) {
        const auto b = ident_start(q);
        const auto word = s_.substr(b, q + 1 - b);
        if (kControl.count(word)) {
          if (!parts.empty() && parts.back().second == ')') parts.pop_back();
        } else if (!regex_keyword(word)) {
          parts.emplace_back(b, 'w');
        }
      }
      break;
    }
    return parts.empty() ? std::string_view::npos : parts.back().first;
  }

  std::size_t receiver_start(std::size_t name_start) const {
    auto start = name_start;
    while (true) {
      const auto p = prev_sig(start);
      if (p == std::string_view::npos || !code(p) || s_[p] != '.') break;
      if (p > 0 && s_[p - 1] == '.') break;  // spread
      auto dot = p;
      if (dot > 0 && code(dot - 1) && s_[dot - 1] == '?') --dot;
      const auto operand = operand_back(prev_sig(dot));
      if (operand == std::string_view::npos) break;
      start = operand;
    }
    return start;
  }

  // End of an anonymous callee expression beginning at pos.
  std::size_t callee_end(std::size_t pos) const {
    std::size_t end;
    if (is_ident_byte(s_[pos])) {
      end = pos;
      while (end < s_.size() && code(end) && is_ident_byte(s_[end])) ++end;
    } else if (s_[pos] == '(' || s_[pos] == '[') {
      end = match_forward(pos) + 1;
    } else {
      throw PositionMismatch("no callee at site");
    }
    while (true) {
      auto q = next_sig(end);
      if (q == std::string_view::npos || !code(q)) return end;
      if (s_[q] == '[') {
        end = match_forward(q) + 1;
        continue;
      }
      if (s_[q] == '?' && q + 1 < s_.size() && s_[q + 1] == '.') ++q;
      if (s_[q] != '.') return end;
      const auto r = next_sig(q + 1);
      if (r == std::string_view::npos || !code(r) || !is_ident_byte(s_[r])) return end;
      end = r;
      while (end < s_.size() && code(end) && is_ident_byte(s_[end])) ++end;
    }
  }

  Span locate(const CallSite& site) const {
    const auto pos = offset_of(s_, site.line, site.column);
    if (pos >= s_.size() || !code(pos)) throw PositionMismatch("site is not in code");
    std::size_t after;
    if (!site.function_name.empty()) {
      const auto& name = site.function_name;
      if (s_.compare(pos, name.size(), name) != 0 || (pos > 0 && code(pos - 1) && is_ident_byte(s_[pos - 1])) ||
          (pos + name.size() < s_.size() && is_ident_byte(s_[pos + name.size()])))
        throw PositionMismatch("'" + name + "' not found at " + std::to_string(site.line) + ":" +
                               std::to_string(site.column));
      after = pos + name.size();
    } else {
      after = callee_end(pos);
    }
    auto open = next_sig(after);
    if (open != std::string_view::npos && code(open) && s_[open] == '?' && open + 1 < s_.size() &&
        s_[open + 1] == '.')
      open = next_sig(open + 2);
    if (open == std::string_view::npos || !code(open) || s_[open] != '(')
      throw PositionMismatch("no argument list after the callee");
    const auto close = match_forward(open);
    return {receiver_start(pos), close + 1};
  }

 private:
  std::string_view s_;
  const std::vector<Cls>& cls_;
};

std::size_t utf8_length(unsigned char lead) {
  if (lead >= 0xF0) return 4;
  if (lead >= 0xE0) return 3;
  if (lead >= 0xC0) return 2;
  return 1;
}

bool glob_match(std::string_view pattern, std::string_view text) {
  std::size_t p = 0, t = 0, star = std::string_view::npos, resume = 0;
  while (t < text.size()) {
    if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      resume = t;
    } else if (p < pattern.size() && pattern[p] == text[t]) {
      ++p;
      ++t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++resume;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

bool is_path_delimiter(char c) {
  return c == '-' || c == '_' || c == '.' || c == '/' || c == '~';
}

Json site_json(const CallSite& s) {
  return {{"function_name", s.function_name}, {"line", s.line}, {"column", s.column}};
}

CallSite site_from_json(const std::string& url, const Json& j) {
  return {url, j.at("function_name").get<std::string>(), j.at("line").get<std::int64_t>(),
          j.at("column").get<std::int64_t>()};
}

}  // namespace

std::string_view to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::kSourceUncaptured: return "SourceUncaptured";
    case SkipReason::kInlineScript: return "InlineScript";
    case SkipReason::kPositionMismatch: return "PositionMismatch";
    case SkipReason::kUnbalancedExtent: break;
  }
  return "UnbalancedExtent";
}

std::optional<SkipReason> parse_skip_reason(std::string_view text) {
  for (const auto r : {SkipReason::kSourceUncaptured, SkipReason::kInlineScript,
                       SkipReason::kPositionMismatch, SkipReason::kUnbalancedExtent})
    if (to_string(r) == text) return r;
  return std::nullopt;
}

std::size_t offset_of(std::string_view source, std::int64_t line, std::int64_t column) {
  if (line < 1 || column < 1) throw PositionMismatch("position must be 1-based");
  std::size_t i = 0;
  for (std::int64_t current = 1; current < line;) {
    if (i >= source.size()) throw PositionMismatch("line " + std::to_string(line) + " past end");
    if (const auto t = terminator_at(source, i)) {
      i += t;
      ++current;
    } else {
      ++i;
    }
  }
  std::int64_t units = 1;
  while (units < column) {
    if (i >= source.size() || terminator_at(source, i))
      throw PositionMismatch("column " + std::to_string(column) + " past end of line");
    const auto len = utf8_length(static_cast<unsigned char>(source[i]));
    units += len == 4 ? 2 : 1;
    i += len;
  }
  if (units != column || i > source.size())
    throw PositionMismatch("column splits a surrogate pair");
  return i;
}

Span locate_call_extent(std::string_view source, const CallSite& site) {
  const auto lexed = lex(source);
  return Extent(source, lexed).locate(site);
}

SurrogateScript neutralize(std::string script_url, std::string_view source,
                           std::vector<CallSite> sites) {
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  SurrogateScript out{std::move(script_url), std::string(source), std::string(source), {}};
  const auto lexed = lex(source);
  const Extent extent(source, lexed);

  struct Found {
    Span span;
    std::size_t site;
  };
  std::vector<Found> found;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    try {
      found.push_back({extent.locate(sites[i]), i});
    } catch (const PositionMismatch&) {
      out.report.skipped.push_back({sites[i], SkipReason::kPositionMismatch});
    } catch (const UnbalancedExtent&) {
      out.report.skipped.push_back({sites[i], SkipReason::kUnbalancedExtent});
    }
  }
  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    if (a.span.begin != b.span.begin) return a.span.begin < b.span.begin;
    if (a.span.end != b.span.end) return a.span.end > b.span.end;
    return a.site < b.site;
  });
  std::vector<Found> kept;
  for (const auto& f : found) {
    if (!kept.empty() && f.span.begin < kept.back().span.end) {
      out.report.skipped.push_back({sites[f.site], SkipReason::kPositionMismatch});
      continue;
    }
    kept.push_back(f);
  }
  for (auto it = kept.rbegin(); it != kept.rend(); ++it)
    out.rewritten.replace(it->span.begin, it->span.end - it->span.begin, kMockCall);
  if (!kept.empty()) out.rewritten.insert(0, kMockPrelude);
  for (const auto& f : kept) out.report.neutralized.push_back(sites[f.site]);
  std::sort(out.report.neutralized.begin(), out.report.neutralized.end());
  std::sort(out.report.skipped.begin(), out.report.skipped.end(),
            [](const auto& a, const auto& b) { return a.site < b.site; });
  return out;
}

bool verify_integrity(std::string_view source) {
  const auto lexed = lex(source);
  if (!lexed.terminated) return false;
  std::vector<char> expect;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (lexed.cls[i] != Cls::kCode) continue;
    switch (source[i]) {
      case '(': expect.push_back(')'); break;
      case '[': expect.push_back(']'); break;
      case '{': expect.push_back('}'); break;
      case ')':
      case ']':
      case '}':
        if (expect.empty() || expect.back() != source[i]) return false;
        expect.pop_back();
        break;
      default: break;
    }
  }
  return expect.empty();
}

bool ReplacementRule::matches(std::string_view url) const {
  const auto parsed = parse_url(url);
  return parsed && host_matches_domain(parsed->host, domain) &&
         glob_match(path_pattern, parsed->path);
}

ReplacementRule emit_rule(std::string_view script_url) {
  const auto url = parse_url_or_throw(script_url);
  ReplacementRule rule;
  rule.domain = registrable_domain(url.host);
  rule.script_url = std::string(script_url);
  rule.surrogate_file = percent_encode(script_url);
  const std::string_view path = url.path;
  std::string& out = rule.path_pattern;
  std::size_t i = 0;
  while (i < path.size()) {
    if (is_path_delimiter(path[i])) {
      out += path[i++];
      continue;
    }
    auto j = i;
    while (j < path.size() && !is_path_delimiter(path[j])) ++j;
    const auto token = path.substr(i, j - i);
    const bool volatile_token =
        token.size() >= 6 &&
        std::all_of(token.begin(), token.end(),
                    [](char c) { return std::isalnum(static_cast<unsigned char>(c)); }) &&
        std::any_of(token.begin(), token.end(),
                    [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if (volatile_token) {
      if (out.empty() || out.back() != '*') out += '*';
      if (j < path.size() && (path[j] == '-' || path[j] == '_')) ++j;
    } else {
      out += token;
    }
    i = j;
  }
  return rule;
}

std::vector<CallSiteTarget> call_sites(const PageGraph& graph, const std::set<NodeId>& tracking) {
  std::vector<CallSiteTarget> out;
  for (const auto& [id, fn] : function_nodes(graph)) {
    if (!tracking.count(id)) continue;
    CallSiteTarget target{{fn.script_url, fn.function_name, fn.line, fn.column},
                          fn.is_inline, fn.is_eval};
    for (const auto& obs : graph.observations()) {
      const auto at = std::find(obs.frames.begin(), obs.frames.end(), id);
      if (at == obs.frames.end()) continue;
      if (at + 1 != obs.frames.end())
        if (const auto* caller = graph.find_function(*(at + 1))) {
          target.site.script_url = caller->script_url;
          target.inline_script = caller->is_inline;
          target.eval_script = caller->is_eval;
        }
      break;
    }
    out.push_back(std::move(target));
  }
  return out;
}

std::size_t SurrogateBatch::total_sites() const {
  std::size_t n = 0;
  for (const auto& s : scripts) n += s.report.total();
  return n;
}

std::size_t SurrogateBatch::neutralized_sites() const {
  std::size_t n = 0;
  for (const auto& s : scripts) n += s.report.neutralized.size();
  return n;
}

SurrogateBatch generate_surrogates(const std::vector<CallSiteTarget>& targets,
                                   const std::map<std::string, std::string>& sources) {
  std::map<std::string, std::map<CallSite, std::optional<SkipReason>>> by_script;
  for (const auto& t : targets) {
    std::optional<SkipReason> reason;
    if (t.inline_script) reason = SkipReason::kInlineScript;
    else if (t.eval_script || !sources.count(t.site.script_url)) reason = SkipReason::kSourceUncaptured;
    by_script[t.site.script_url].try_emplace(t.site, reason);
  }
  SurrogateBatch batch;
  for (const auto& [url, sites] : by_script) {
    std::vector<CallSite> locatable;
    std::vector<SkippedSite> skipped;
    for (const auto& [site, reason] : sites) {
      if (reason) skipped.push_back({site, *reason});
      else locatable.push_back(site);
    }
    const auto source = sources.find(url);
    auto script = source == sources.end()
                      ? SurrogateScript{url, "", "", {}}
                      : neutralize(url, source->second, std::move(locatable));
    script.report.skipped.insert(script.report.skipped.end(), skipped.begin(), skipped.end());
    std::sort(script.report.skipped.begin(), script.report.skipped.end(),
              [](const auto& a, const auto& b) { return a.site < b.site; });
    batch.scripts.push_back(std::move(script));
  }
  return batch;
}

std::string manifest_json(const SurrogateBatch& batch) {
  Json rules = Json::array(), reports = Json::array();
  for (const auto& script : batch.scripts) {
    if (!script.report.neutralized.empty()) {
      const auto rule = emit_rule(script.script_url);
      rules.push_back({{"pattern", rule.pattern()},
                       {"domain", rule.domain},
                       {"path", rule.path_pattern},
                       {"script_url", rule.script_url},
                       {"surrogate", rule.surrogate_file}});
    }
    Json neutralized = Json::array(), skipped = Json::array();
    for (const auto& s : script.report.neutralized) neutralized.push_back(site_json(s));
    for (const auto& s : script.report.skipped) {
      auto j = site_json(s.site);
      j["reason"] = to_string(s.reason);
      skipped.push_back(std::move(j));
    }
    reports.push_back(
        {{"script_url", script.script_url}, {"neutralized", neutralized}, {"skipped", skipped}});
  }
  Json doc;
  doc["version"] = 1;
  doc["rules"] = std::move(rules);
  doc["reports"] = std::move(reports);
  doc["summary"] = {{"sites", batch.total_sites()}, {"neutralized", batch.neutralized_sites()}};
  return doc.dump(2) + "\n";
}

SurrogateManifest parse_manifest(std::string_view text) {
  SurrogateManifest m;
  try {
    const auto doc = Json::parse(text);
    if (doc.at("version").get<int>() != 1) throw std::runtime_error("unsupported version");
    for (const auto& r : doc.at("rules"))
      m.rules.push_back({r.at("domain").get<std::string>(), r.at("path").get<std::string>(),
                         r.at("script_url").get<std::string>(),
                         r.at("surrogate").get<std::string>()});
    for (const auto& r : doc.at("reports")) {
      const auto url = r.at("script_url").get<std::string>();
      auto& report = m.reports[url];
      for (const auto& s : r.at("neutralized")) report.neutralized.push_back(site_from_json(url, s));
      for (const auto& s : r.at("skipped")) {
        const auto reason = parse_skip_reason(s.at("reason").get<std::string>());
        if (!reason) throw std::runtime_error("unknown skip reason");
        report.skipped.push_back({site_from_json(url, s), *reason});
      }
    }
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }
  return m;
}

std::string write_surrogate_dir(const std::string& dir, const SurrogateBatch& batch) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& script : batch.scripts) {
    if (script.report.neutralized.empty()) continue;
    std::ofstream file(fs::path(dir) / percent_encode(script.script_url), std::ios::binary);
    file << script.rewritten;
    if (!file) throw std::runtime_error("cannot write surrogate for " + script.script_url);
  }
  const auto manifest = manifest_json(batch);
  std::ofstream file(fs::path(dir) / "manifest.json", std::ios::binary);
  file << manifest;
  if (!file) throw std::runtime_error("cannot write manifest in " + dir);
  return manifest;
}

}  // namespace tracefn
