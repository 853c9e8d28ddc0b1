#include "tracefn/url.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace tracefn {

namespace {

// Compact public-suffix snapshot. Single-label TLDs are covered by the
// implicit "*" rule; only multi-label suffixes need listing.
constexpr std::array kMultiLabelSuffixes = {
    "co.uk",     "org.uk",     "ac.uk",       "gov.uk",       "ltd.uk",
    "plc.uk",    "me.uk",      "net.uk",      "com.au",       "net.au",
    "org.au",    "edu.au",     "gov.au",      "co.nz",        "org.nz",
    "net.nz",    "co.jp",      "ne.jp",       "or.jp",        "ac.jp",
    "go.jp",     "com.br",     "net.br",      "org.br",       "gov.br",
    "com.cn",    "net.cn",     "org.cn",      "gov.cn",       "com.mx",
    "org.mx",    "co.in",      "net.in",      "org.in",       "gov.in",
    "co.kr",     "or.kr",      "com.tw",      "org.tw",       "com.hk",
    "com.sg",    "com.tr",     "gov.tr",      "co.za",        "org.za",
    "com.ar",    "com.co",     "com.pl",      "com.ua",       "co.il",
    "com.my",    "com.ph",     "com.vn",      "co.id",        "co.th",
    "com.pe",    "com.eg",     "com.sa",      "com.pk",       "com.ng",
    "github.io", "gitlab.io",  "herokuapp.com", "appspot.com", "blogspot.com",
    "cloudfront.net", "azurewebsites.net", "netlify.app", "vercel.app",
    "pages.dev", "workers.dev", "s3.amazonaws.com", "firebaseapp.com",
    "web.app",   "fastly.net",  "akamaized.net", "cdn.cloudflare.net",
};

const std::unordered_set<std::string_view>& suffix_set() {
  static const std::unordered_set<std::string_view> set(
      kMultiLabelSuffixes.begin(), kMultiLabelSuffixes.end());
  return set;
}

bool is_ipv4(std::string_view host) {
  int dots = 0;
  int digits = 0;
  for (char c : host) {
    if (c == '.') {
      if (digits == 0) return false;
      ++dots;
      digits = 0;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      if (++digits > 3) return false;
    } else {
      return false;
    }
  }
  return dots == 3 && digits > 0;
}

bool is_unreserved(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~';
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::optional<Url> parse_url(std::string_view text) {
  const auto colon = text.find("://");
  if (colon == std::string_view::npos || colon == 0) return std::nullopt;
  for (std::size_t i = 0; i < colon; ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (!(std::isalnum(c) || c == '+' || c == '-' || c == '.'))
      return std::nullopt;
  }
  Url url;
  url.scheme = to_lower(text.substr(0, colon));
  std::size_t pos = colon + 3;
  const auto authority_end = text.find_first_of("/?#", pos);
  std::string_view authority = text.substr(
      pos, authority_end == std::string_view::npos ? std::string_view::npos
                                                   : authority_end - pos);
  std::size_t host_start = pos;
  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    host_start += at + 1;
    authority.remove_prefix(at + 1);
  }
  std::string_view host = authority;
  if (!host.empty() && host.front() == '[') {
    const auto close = host.find(']');
    if (close == std::string_view::npos) return std::nullopt;
    if (close + 1 < host.size()) {
      if (host[close + 1] != ':') return std::nullopt;
      url.port = std::string(host.substr(close + 2));
    }
    host = host.substr(0, close + 1);
  } else if (const auto pc = host.rfind(':'); pc != std::string_view::npos) {
    url.port = std::string(host.substr(pc + 1));
    host = host.substr(0, pc);
  }
  if (host.empty()) return std::nullopt;
  for (char c : host) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u) || c == '/' || c == '\\') return std::nullopt;
  }
  for (char c : url.port)
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  url.host = to_lower(host);
  url.host_offset = host_start;

  if (authority_end == std::string_view::npos) {
    url.path = "/";
    return url;
  }
  std::string_view rest = text.substr(authority_end);
  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    url.fragment = std::string(rest.substr(hash + 1));
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    url.query = std::string(rest.substr(q + 1));
    rest = rest.substr(0, q);
  }
  url.path = rest.empty() ? "/" : std::string(rest);
  return url;
}

Url parse_url_or_throw(std::string_view text) {
  auto url = parse_url(text);
  if (!url) throw InvalidUrl(std::string(text));
  return *std::move(url);
}

std::string registrable_domain(std::string_view host_in) {
  std::string host = to_lower(host_in);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty() || host.front() == '[' || is_ipv4(host)) return host;

  const auto& suffixes = suffix_set();
  // Find the longest listed suffix; otherwise the last label is the suffix.
  std::size_t suffix_start = host.rfind('.');
  if (suffix_start == std::string::npos) return host;
  ++suffix_start;
  for (std::size_t i = 0; i < host.size(); ++i) {
    if (i != 0 && host[i - 1] != '.') continue;
    if (suffixes.count(std::string_view(host).substr(i))) {
      suffix_start = std::min(suffix_start, i);
      break;
    }
  }
  if (suffix_start <= 1) return host;
  const auto label_end = suffix_start - 1;
  const auto label_start = host.rfind('.', label_end - 1);
  return label_start == std::string::npos ? host : host.substr(label_start + 1);
}

bool host_matches_domain(std::string_view host, std::string_view domain) {
  if (domain.empty() || host.size() < domain.size()) return false;
  if (host.substr(host.size() - domain.size()) != domain) return false;
  return host.size() == domain.size() ||
         host[host.size() - domain.size() - 1] == '.';
}

bool is_third_party(std::string_view request_url, std::string_view page_url) {
  const auto req = parse_url(request_url);
  const auto page = parse_url(page_url);
  if (!req || !page) return false;
  return registrable_domain(req->host) != registrable_domain(page->host);
}

std::string percent_encode(std::string_view text) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size() * 3);
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (is_unreserved(u)) {
      out.push_back(c);
    } else {
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xF]);
    }
  }
  return out;
}

std::optional<std::string> percent_decode(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '%') {
      out.push_back(text[i]);
      continue;
    }
    if (i + 2 >= text.size()) return std::nullopt;
    const int hi = hex_value(text[i + 1]);
    const int lo = hex_value(text[i + 2]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

}  // namespace tracefn
