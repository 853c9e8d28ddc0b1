#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tracefn/graph.hpp"

namespace tracefn {

// Where a tracking function is invoked: the function-name start of the call
// expression, 1-based, columns in UTF-16 code units.
struct CallSite {
  std::string script_url;
  std::string function_name;  // empty: anonymous
  std::int64_t line = 1;
  std::int64_t column = 1;

  auto operator<=>(const CallSite&) const = default;
};

enum class SkipReason { kSourceUncaptured, kInlineScript, kPositionMismatch, kUnbalancedExtent };
std::string_view to_string(SkipReason reason);
std::optional<SkipReason> parse_skip_reason(std::string_view text);

struct SkippedSite {
  CallSite site;
  SkipReason reason = SkipReason::kPositionMismatch;

  bool operator==(const SkippedSite&) const = default;
};

struct NeutralizationReport {
  std::vector<CallSite> neutralized;
  std::vector<SkippedSite> skipped;

  std::size_t total() const { return neutralized.size() + skipped.size(); }
  bool operator==(const NeutralizationReport&) const = default;
};

struct SurrogateScript {
  std::string script_url;
  std::string original;
  std::string rewritten;
  NeutralizationReport report;
};

class PositionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnbalancedExtent : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kMockCall = "__notjsMock()";
inline constexpr std::string_view kMockPrelude = "function __notjsMock() {}\n";

// Byte range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const Span&) const = default;
};

// Byte offset of a 1-based (line, UTF-16 column) position. Lines end at
// \n, \r\n, \r, U+2028 and U+2029. Throws PositionMismatch when out of range.
std::size_t offset_of(std::string_view source, std::int64_t line, std::int64_t column);

Span locate_call_extent(std::string_view source, const CallSite& site);

// Replaces every locatable site with the mock call. Overlapping extents keep
// the outermost one; the rest are skipped as position mismatches.
SurrogateScript neutralize(std::string script_url, std::string_view source,
                           std::vector<CallSite> sites);

// Brackets balance outside strings, comments and regex literals, and every
// such construct terminates.
bool verify_integrity(std::string_view source);

struct ReplacementRule {
  std::string domain;        // registrable domain; subdomains match too
  std::string path_pattern;  // '*' matches any run of characters
  std::string script_url;
  std::string surrogate_file;

  std::string pattern() const { return domain + path_pattern; }
  bool matches(std::string_view url) const;
};

// Throws InvalidUrl.
ReplacementRule emit_rule(std::string_view script_url);

// A neutralization target derived from a tracking function node.
struct CallSiteTarget {
  CallSite site;
  bool inline_script = false;
  bool eval_script = false;
};

// Each tracking node's own frame position. The call expression lives in the
// caller frame's script (the node's own script for the outermost frame).
std::vector<CallSiteTarget> call_sites(const PageGraph& graph, const std::set<NodeId>& tracking);

struct SurrogateBatch {
  std::vector<SurrogateScript> scripts;  // one per distinct script_url, sorted
  std::size_t total_sites() const;
  std::size_t neutralized_sites() const;
};

// Scripts without captured source, inline or eval-sourced ones get every
// site skipped with the matching reason.
SurrogateBatch generate_surrogates(const std::vector<CallSiteTarget>& targets,
                                   const std::map<std::string, std::string>& sources);

// Writes <dir>/<percent-encoded url> for every script with >= 1 neutralized
// site plus <dir>/manifest.json; returns the manifest text.
std::string write_surrogate_dir(const std::string& dir, const SurrogateBatch& batch);

struct SurrogateManifest {
  std::vector<ReplacementRule> rules;
  std::map<std::string, NeutralizationReport> reports;
};

std::string manifest_json(const SurrogateBatch& batch);
SurrogateManifest parse_manifest(std::string_view text);

}  // namespace tracefn
