#pragma once

// Reference filter semantics for cross-checking the matcher: each rule is
// translated to a std::regex and its options are evaluated separately.

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tracefn::testing {

struct OracleContext {
  std::string page_host;
  std::string resource_type;  // "script", "image", "xmlhttprequest", or ""
  bool third_party = false;
};

enum class OracleVerdict { kBlock, kAllow, kNoMatch };

inline std::string oracle_lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline bool oracle_domain_match(const std::string& host, const std::string& domain) {
  if (host == domain) return true;
  return host.size() > domain.size() &&
         host.compare(host.size() - domain.size(), domain.size(), domain) == 0 &&
         host[host.size() - domain.size() - 1] == '.';
}

class OracleRule {
 public:
  // Returns nullopt for rules outside the supported subset.
  static std::optional<OracleRule> compile(const std::string& raw) {
    OracleRule r;
    std::string body = raw;
    if (body.rfind("@@", 0) == 0) {
      r.exception_ = true;
      body = body.substr(2);
    }
    const auto dollar = body.rfind('$');
    if (dollar != std::string::npos) {
      std::string opts = oracle_lower(body.substr(dollar + 1));
      body = body.substr(0, dollar);
      std::size_t start = 0;
      while (true) {
        const auto comma = opts.find(',', start);
        const auto opt = opts.substr(start, comma == std::string::npos ? std::string::npos
                                                                       : comma - start);
        if (!r.add_option(opt)) return std::nullopt;
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    std::string re;
    std::size_t i = 0;
    if (body.rfind("||", 0) == 0) {
      re = R"(^[a-z][a-z0-9+.\-]*://(?:[^/?#@]*@)?(?:[^/?#:@]*\.)?)";
      i = 2;
    } else if (body.rfind("|", 0) == 0) {
      re = "^";
      i = 1;
    }
    bool end = false;
    std::size_t stop = body.size();
    if (stop > i && body[stop - 1] == '|') {
      end = true;
      --stop;
    }
    for (; i < stop; ++i) {
      const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(body[i])));
      if (c == '*') re += ".*";
      else if (c == '^') re += R"((?:[^a-z0-9_\-.%]|$))";
      else if (std::string_view(R"(\.$|?+()[]{}/)").find(c) != std::string_view::npos)
        re += std::string("\\") + c;
      else re += c;
    }
    if (end) re += "$";
    r.regex_ = std::regex(re, std::regex::ECMAScript | std::regex::optimize);
    return r;
  }

  bool exception() const { return exception_; }

  bool matches(const std::string& url, const OracleContext& ctx) const {
    if (third_party_ && *third_party_ != ctx.third_party) return false;
    const auto type = ctx.resource_type;
    if (!types_.empty()) {
      bool found = false;
      for (const auto& t : types_) found = found || t == type;
      if (!found) return false;
    }
    for (const auto& t : not_types_)
      if (t == type) return false;
    if (!includes_.empty() || !excludes_.empty()) {
      std::string best;
      bool excluded = false;
      for (const auto& d : includes_)
        if (oracle_domain_match(ctx.page_host, d) && d.size() > best.size()) best = d;
      for (const auto& d : excludes_)
        if (oracle_domain_match(ctx.page_host, d) && d.size() >= best.size()) {
          best = d;
          excluded = true;
        }
      if (excluded) return false;
      if (best.empty() && !includes_.empty()) return false;
    }
    return std::regex_search(oracle_lower(url), regex_);
  }

 private:
  bool add_option(const std::string& opt) {
    if (opt == "third-party") third_party_ = true;
    else if (opt == "~third-party") third_party_ = false;
    else if (opt == "script" || opt == "image" || opt == "xmlhttprequest") types_.push_back(opt);
    else if (opt == "~script" || opt == "~image" || opt == "~xmlhttprequest")
      not_types_.push_back(opt.substr(1));
    else if (opt.rfind("domain=", 0) == 0) {
      std::string list = opt.substr(7) + "|";
      std::string cur;
      for (const char c : list) {
        if (c != '|') {
          cur += c;
          continue;
        }
        if (cur.empty() || cur == "~") return false;
        if (cur[0] == '~') excludes_.push_back(cur.substr(1));
        else includes_.push_back(cur);
        cur.clear();
      }
    } else {
      return false;
    }
    return true;
  }

  bool exception_ = false;
  std::optional<bool> third_party_;
  std::vector<std::string> types_, not_types_, includes_, excludes_;
  std::regex regex_;
};

struct OracleDecision {
  OracleVerdict verdict = OracleVerdict::kNoMatch;
  std::string rule;
};

struct OracleRuleList {
  std::vector<std::pair<std::string, OracleRule>> rules;

  explicit OracleRuleList(const std::vector<std::string>& raw_rules) {
    for (const auto& raw : raw_rules)
      if (auto rule = OracleRule::compile(raw)) rules.emplace_back(raw, std::move(*rule));
  }

  OracleDecision decide(const std::string& url, const OracleContext& ctx) const {
    std::optional<std::string> block, allow;
    for (const auto& [raw, rule] : rules) {
      if (!rule.matches(url, ctx)) continue;
      auto& slot = rule.exception() ? allow : block;
      if (!slot) slot = raw;
    }
    if (allow) return {OracleVerdict::kAllow, *allow};
    if (block) return {OracleVerdict::kBlock, *block};
    return {};
  }
};

inline OracleDecision oracle_decide(const std::vector<std::string>& raw_rules,
                                    const std::string& url, const OracleContext& ctx) {
  return OracleRuleList(raw_rules).decide(url, ctx);
}

// Hand-picked rules, URLs and pages exercising anchors, separators,
// wildcards, case, and every supported option.
inline const std::vector<std::string>& curated_rules() {
  static const std::vector<std::string> rules = {
      "||tracker.com^",
      "||tracker.com/pixel",
      "||ads.example.com^$third-party",
      "||example.com^$~third-party",
      "|https://cdn.",
      "|http://",
      ".gif|",
      "/banner/*/ad_",
      "/collect?",
      "analytics.js",
      "&uid=",
      "?u=*&",
      "^track^",
      "pixel^",
      "*/beacon/*",
      "||metrics.*.net^",
      "||sync.adnet-tracker.com^$image",
      "||cdn.com^$script",
      "||cdn.com^$~script",
      "/api/*$xmlhttprequest",
      "/api/*$~xmlhttprequest,third-party",
      "||tracker.com^$domain=news.com",
      "||tracker.com^$domain=~news.com",
      "||tracker.com^$domain=news.com|~sports.news.com",
      "||tracker.com^$domain=~news.com|live.sports.news.com",
      "id=$script,image",
      "LAUNCH-",
      "||UPPER.org/Path",
      "track*pixel",
      "%20ad",
      "ad.js|",
      "|https://tracker.com/|",
      "||com/",
      "-ad-",
      "_ad_",
      "||tracker.com",
      "^c.gif",
      "example.com:8080",
      "tracker.com^*/x",
      "*",
      "@@||tracker.com/allowed^",
      "@@||cdn.com^$script",
      "@@/collect?$domain=shop.example.com",
      "@@*$~third-party",
      "@@||example.com^$image",
  };
  return rules;
}

inline const std::vector<std::string>& curated_urls() {
  static const std::vector<std::string> urls = {
      "http://tracker.com/pixel.gif",
      "https://tracker.com/",
      "https://sub.tracker.com/track/pixel?id=1",
      "https://nottracker.com/pixel",
      "https://tracker.com.evil.net/x",
      "https://tracker.com:8443/allowed/x",
      "http://tracker.com/allowed",
      "https://tracker.com/allowedx",
      "https://ads.example.com/banner/300/ad_1.png",
      "https://example.com:8080/a.gif",
      "https://www.example.com/collect?uid=7&u=1",
      "https://cdn.com/lib/analytics.js",
      "https://cdn.site.org/launch-ENab12.min.js",
      "https://metrics.foo.net/beacon/v1",
      "https://metrics.net/x",
      "https://sync.adnet-tracker.com/id?u=anon&x=2",
      "https://api.shop.example.com/api/v2/cart",
      "https://Upper.org/path/To",
      "https://static.news.com/img/top-ad-box.png",
      "https://static.news.com/img/top_ad_box.png",
      "https://s.com/%20ad%20",
      "https://s.com/files/ad.js",
      "https://s.com/files/ad.jsx",
      "https://user@tracker.com/pixel",
      "https://x.com/?id=5",
      "https://x.com/r?u=1&track=1",
  };
  return urls;
}

inline const std::vector<std::string>& curated_pages() {
  static const std::vector<std::string> pages = {
      "https://news.com/", "https://live.sports.news.com/", "https://shop.example.com/",
      "https://tracker.com/"};
  return pages;
}

}  // namespace tracefn::testing
