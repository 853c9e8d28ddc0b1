#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tracefn {

class InvalidUrl : public std::runtime_error {
 public:
  explicit InvalidUrl(const std::string& url)
      : std::runtime_error("invalid URL: " + url) {}
};

// Minimal absolute-URL split. Host is lowercased; path always starts with '/'.
struct Url {
  std::string scheme;
  std::string host;
  std::string port;
  std::string path;
  std::string query;
  std::string fragment;

  // Byte offset of the host inside the original string.
  std::size_t host_offset = 0;
};

std::optional<Url> parse_url(std::string_view text);
Url parse_url_or_throw(std::string_view text);

// eTLD+1 using the bundled public-suffix snapshot. IP literals and single
// label hosts are returned unchanged.
std::string registrable_domain(std::string_view host);

// True when `host` equals `domain` or is a subdomain of it.
bool host_matches_domain(std::string_view host, std::string_view domain);

// Third-party iff the registrable domains differ.
bool is_third_party(std::string_view request_url, std::string_view page_url);

// Filesystem-safe name for a script URL: everything outside [A-Za-z0-9-_.~]
// becomes %XX (uppercase hex).
std::string percent_encode(std::string_view text);
std::optional<std::string> percent_decode(std::string_view text);

std::string to_lower(std::string_view text);

}  // namespace tracefn
