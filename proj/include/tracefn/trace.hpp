#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tracefn {

inline constexpr int kTraceSchemaVersion = 1;

// Variable counts visible to a frame when the activity fired.
struct ScopeSignature {
  std::int64_t num_args = 0;
  std::int64_t num_local = 0;
  std::int64_t num_global = 0;
  std::int64_t num_closure = 0;

  auto operator<=>(const ScopeSignature&) const = default;
};

struct StackFrame {
  // Inline scripts: page_url + "#inline[n]"; eval code: parent + "#eval[n]".
  std::string script_url;
  std::string function_name;  // empty for anonymous functions
  std::int64_t line = 1;      // 1-based
  std::int64_t column = 1;    // 1-based
  ScopeSignature scope;
  bool is_eval = false;
  bool is_inline = false;

  auto operator<=>(const StackFrame&) const = default;
};

enum class EventKind { kNetworkRequest, kDomModification, kStorageAccess, kWebApiCall };
enum class AccessMode { kGet, kSet };
enum class StorageMechanism { kCookie, kLocalStorage };
enum class MutationKind { kAttribute, kInsert, kRemove };
enum class DomCall {
  kNone,
  kSetAttribute,
  kGetAttribute,
  kRemoveAttribute,
  kAddEventListener,
  kRemoveEventListener,
};

struct NetworkRequest {
  std::string url;
  std::string method;
  std::optional<int> status_code;  // absent: response never observed
  std::string resource_type;       // empty: generic
  std::string page_origin;

  auto operator<=>(const NetworkRequest&) const = default;
};

struct DomModification {
  std::string target_selector;
  MutationKind mutation_kind = MutationKind::kAttribute;
  DomCall dom_call = DomCall::kNone;

  auto operator<=>(const DomModification&) const = default;
};

struct StorageAccess {
  StorageMechanism mechanism = StorageMechanism::kCookie;
  AccessMode mode = AccessMode::kGet;
  std::string key;

  auto operator<=>(const StorageAccess&) const = default;
};

struct WebApiCall {
  std::string api_name;  // one of captured_web_apis()
  AccessMode mode = AccessMode::kGet;
  // Element the API read was scoped to (e.g. the mouse event target).
  std::string target_selector;

  auto operator<=>(const WebApiCall&) const = default;
};

using EventPayload =
    std::variant<NetworkRequest, DomModification, StorageAccess, WebApiCall>;

struct TraceEvent {
  double timestamp = 0.0;  // ms since page-load start
  std::vector<StackFrame> call_stack;  // [0] is the initiator
  EventPayload payload;

  EventKind kind() const { return static_cast<EventKind>(payload.index()); }

  bool operator==(const TraceEvent&) const = default;
};

struct TraceLog {
  std::string page_url;
  std::vector<TraceEvent> events;
  std::map<std::string, std::string> script_sources;
  // Non-inline, non-eval script URLs with no captured source.
  std::set<std::string> uncaptured_scripts;

  bool operator==(const TraceLog&) const = default;
};

enum class DiagnosticKind { kMalformedRecord, kMissingField, kUnknownEventKind, kInvalidValue };

struct Diagnostic {
  std::size_t line_no = 0;  // 1-based
  DiagnosticKind kind = DiagnosticKind::kMalformedRecord;
  std::string detail;  // field name, event kind, or parser message

  std::string to_string() const;
};

struct TraceParseResult {
  TraceLog log;  // valid records only
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return diagnostics.empty(); }
};

class TraceError : public std::runtime_error {
 public:
  explicit TraceError(Diagnostic diagnostic)
      : std::runtime_error(diagnostic.to_string()),
        diagnostic_(std::move(diagnostic)) {}
  const Diagnostic& diagnostic() const { return diagnostic_; }

 private:
  Diagnostic diagnostic_;
};

class ArchiveUnreadable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Closed set of Web APIs the collector instruments.
const std::vector<std::string>& captured_web_apis();
bool is_captured_web_api(std::string_view name);

std::string_view to_string(EventKind kind);
std::string_view to_string(AccessMode mode);
std::string_view to_string(StorageMechanism mechanism);
std::string_view to_string(MutationKind kind);
std::string_view to_string(DomCall call);

// One diagnostic per bad line; good lines are kept in file order. Blank lines
// are ignored.
TraceParseResult parse_trace_log(std::string_view text);

// Throws TraceError carrying the first diagnostic.
TraceLog parse_trace_log_or_throw(std::string_view text);

TraceLog read_trace_file(const std::filesystem::path& path);

// Inverse of parse_trace_log for the event records (sources are not inlined).
std::string serialize_trace_log(const TraceLog& log);

struct ScriptArchive {
  std::map<std::string, std::string> sources;
  // Archive entries whose names do not decode to a URL.
  std::vector<std::string> rejected_entries;
};

// Archive is a directory of files named percent_encode(script_url).
ScriptArchive load_script_sources(const std::filesystem::path& archive);

void write_script_archive(const std::filesystem::path& archive,
                          const std::map<std::string, std::string>& sources);

// Returns a copy of `log` with sources attached and uncaptured_scripts
// recomputed from the referenced frames.
TraceLog attach_sources(TraceLog log, std::map<std::string, std::string> sources);

}  // namespace tracefn
