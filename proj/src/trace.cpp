#include "tracefn/trace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tracefn/url.hpp"

namespace tracefn {

namespace {

using nlohmann::json;

// Parsing helpers signal failure with this; the outer loop turns it into a
// Diagnostic tagged with the line number.
struct RecordError {
  DiagnosticKind kind;
  std::string detail;
};

const json& require(const json& object, const char* key, const std::string& path) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null())
    throw RecordError{DiagnosticKind::kMissingField, path + key};
  return *it;
}

std::string require_string(const json& object, const char* key, const std::string& path) {
  const auto& value = require(object, key, path);
  if (!value.is_string())
    throw RecordError{DiagnosticKind::kInvalidValue, path + key};
  return value.get<std::string>();
}

std::string optional_string(const json& object, const char* key, const std::string& path) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) return {};
  if (!it->is_string()) throw RecordError{DiagnosticKind::kInvalidValue, path + key};
  return it->get<std::string>();
}

std::int64_t require_int(const json& object, const char* key, const std::string& path) {
  const auto& value = require(object, key, path);
  if (!value.is_number_integer())
    throw RecordError{DiagnosticKind::kInvalidValue, path + key};
  return value.get<std::int64_t>();
}

std::int64_t optional_count(const json& object, const char* key, const std::string& path) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) return 0;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0)
    throw RecordError{DiagnosticKind::kInvalidValue, path + key};
  return it->get<std::int64_t>();
}

bool optional_bool(const json& object, const char* key, const std::string& path) {
  const auto it = object.find(key);
  if (it == object.end() || it->is_null()) return false;
  if (!it->is_boolean()) throw RecordError{DiagnosticKind::kInvalidValue, path + key};
  return it->get<bool>();
}

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::pair<const char*, Enum> (&table)[N],
                const std::string& field) {
  for (const auto& [name, value] : table)
    if (text == name) return value;
  throw RecordError{DiagnosticKind::kInvalidValue, field + "=" + text};
}

constexpr std::pair<const char*, AccessMode> kModes[] = {
    {"get", AccessMode::kGet}, {"set", AccessMode::kSet}};
constexpr std::pair<const char*, StorageMechanism> kMechanisms[] = {
    {"cookie", StorageMechanism::kCookie},
    {"local_storage", StorageMechanism::kLocalStorage}};
constexpr std::pair<const char*, MutationKind> kMutations[] = {
    {"attribute", MutationKind::kAttribute},
    {"insert", MutationKind::kInsert},
    {"remove", MutationKind::kRemove}};
constexpr std::pair<const char*, DomCall> kDomCalls[] = {
    {"", DomCall::kNone},
    {"setAttribute", DomCall::kSetAttribute},
    {"getAttribute", DomCall::kGetAttribute},
    {"removeAttribute", DomCall::kRemoveAttribute},
    {"addEventListener", DomCall::kAddEventListener},
    {"removeEventListener", DomCall::kRemoveEventListener}};
constexpr std::pair<const char*, EventKind> kEventKinds[] = {
    {"network_request", EventKind::kNetworkRequest},
    {"dom_modification", EventKind::kDomModification},
    {"storage_access", EventKind::kStorageAccess},
    {"web_api_call", EventKind::kWebApiCall}};

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum value, const std::pair<const char*, Enum> (&table)[N]) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

StackFrame parse_frame(const json& frame, const std::string& path) {
  if (!frame.is_object()) throw RecordError{DiagnosticKind::kInvalidValue, path};
  StackFrame out;
  out.script_url = require_string(frame, "script_url", path);
  out.function_name = require_string(frame, "function_name", path);
  out.line = require_int(frame, "line", path);
  out.column = require_int(frame, "column", path);
  if (out.line < 1) throw RecordError{DiagnosticKind::kInvalidValue, path + "line"};
  if (out.column < 1) throw RecordError{DiagnosticKind::kInvalidValue, path + "column"};
  if (const auto it = frame.find("scope"); it != frame.end() && !it->is_null()) {
    if (!it->is_object()) throw RecordError{DiagnosticKind::kInvalidValue, path + "scope"};
    const std::string scope_path = path + "scope.";
    out.scope.num_args = optional_count(*it, "num_args", scope_path);
    out.scope.num_local = optional_count(*it, "num_local", scope_path);
    out.scope.num_global = optional_count(*it, "num_global", scope_path);
    out.scope.num_closure = optional_count(*it, "num_closure", scope_path);
  }
  out.is_eval = optional_bool(frame, "is_eval", path);
  out.is_inline = optional_bool(frame, "is_inline", path);
  if (out.is_eval && out.is_inline)
    throw RecordError{DiagnosticKind::kInvalidValue, path + "is_eval/is_inline"};
  return out;
}

EventPayload parse_payload(EventKind kind, const json& payload) {
  if (!payload.is_object()) throw RecordError{DiagnosticKind::kInvalidValue, "payload"};
  const std::string p = "payload.";
  switch (kind) {
    case EventKind::kNetworkRequest: {
      NetworkRequest out;
      out.url = require_string(payload, "url", p);
      out.method = optional_string(payload, "method", p);
      if (out.method.empty()) out.method = "GET";
      if (const auto it = payload.find("status_code"); it != payload.end() && !it->is_null()) {
        if (!it->is_number_integer())
          throw RecordError{DiagnosticKind::kInvalidValue, p + "status_code"};
        out.status_code = it->get<int>();
      }
      out.resource_type = optional_string(payload, "resource_type", p);
      out.page_origin = optional_string(payload, "page_origin", p);
      return out;
    }
    case EventKind::kDomModification: {
      DomModification out;
      out.target_selector = require_string(payload, "target_selector", p);
      out.mutation_kind = parse_enum(require_string(payload, "mutation_kind", p), kMutations,
                                     p + "mutation_kind");
      out.dom_call = parse_enum(optional_string(payload, "dom_call", p), kDomCalls, p + "dom_call");
      return out;
    }
    case EventKind::kStorageAccess: {
      StorageAccess out;
      out.mechanism = parse_enum(require_string(payload, "mechanism", p), kMechanisms,
                                 p + "mechanism");
      out.mode = parse_enum(require_string(payload, "mode", p), kModes, p + "mode");
      out.key = optional_string(payload, "key", p);
      return out;
    }
    case EventKind::kWebApiCall: {
      WebApiCall out;
      out.api_name = require_string(payload, "api_name", p);
      if (!is_captured_web_api(out.api_name))
        throw RecordError{DiagnosticKind::kInvalidValue, p + "api_name=" + out.api_name};
      out.mode = parse_enum(require_string(payload, "mode", p), kModes, p + "mode");
      out.target_selector = optional_string(payload, "target_selector", p);
      return out;
    }
  }
  throw RecordError{DiagnosticKind::kUnknownEventKind, "?"};
}

// Returns the record's page_url hint (may be empty).
std::string parse_record(std::string_view line, TraceEvent& event) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RecordError{DiagnosticKind::kMalformedRecord, e.what()};
  }
  if (!record.is_object()) throw RecordError{DiagnosticKind::kMalformedRecord, "not an object"};

  const auto& version = require(record, "v", "");
  if (!version.is_number_integer() || version.get<int>() != kTraceSchemaVersion)
    throw RecordError{DiagnosticKind::kInvalidValue, "v"};

  const auto kind_text = require_string(record, "event_kind", "");
  std::optional<EventKind> kind;
  for (const auto& [name, value] : kEventKinds)
    if (kind_text == name) kind = value;
  if (!kind) throw RecordError{DiagnosticKind::kUnknownEventKind, kind_text};

  const auto& timestamp = require(record, "timestamp", "");
  if (!timestamp.is_number()) throw RecordError{DiagnosticKind::kInvalidValue, "timestamp"};
  event.timestamp = timestamp.get<double>();

  const auto& stack = require(record, "call_stack", "");
  if (!stack.is_array()) throw RecordError{DiagnosticKind::kInvalidValue, "call_stack"};
  event.call_stack.clear();
  for (std::size_t i = 0; i < stack.size(); ++i)
    event.call_stack.push_back(parse_frame(stack[i], "call_stack[" + std::to_string(i) + "]."));

  event.payload = parse_payload(*kind, require(record, "payload", ""));
  return optional_string(record, "page_url", "");
}

json frame_to_json(const StackFrame& frame) {
  json out = json::object();
  out["script_url"] = frame.script_url;
  out["function_name"] = frame.function_name;
  out["line"] = frame.line;
  out["column"] = frame.column;
  out["scope"] = {{"num_args", frame.scope.num_args},
                  {"num_local", frame.scope.num_local},
                  {"num_global", frame.scope.num_global},
                  {"num_closure", frame.scope.num_closure}};
  out["is_eval"] = frame.is_eval;
  out["is_inline"] = frame.is_inline;
  return out;
}

json payload_to_json(const EventPayload& payload) {
  json out = json::object();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NetworkRequest>) {
          out["url"] = p.url;
          out["method"] = p.method;
          if (p.status_code) out["status_code"] = *p.status_code;
          if (!p.resource_type.empty()) out["resource_type"] = p.resource_type;
          if (!p.page_origin.empty()) out["page_origin"] = p.page_origin;
        } else if constexpr (std::is_same_v<T, DomModification>) {
          out["target_selector"] = p.target_selector;
          out["mutation_kind"] = to_string(p.mutation_kind);
          if (p.dom_call != DomCall::kNone) out["dom_call"] = to_string(p.dom_call);
        } else if constexpr (std::is_same_v<T, StorageAccess>) {
          out["mechanism"] = to_string(p.mechanism);
          out["mode"] = to_string(p.mode);
          out["key"] = p.key;
        } else {
          out["api_name"] = p.api_name;
          out["mode"] = to_string(p.mode);
          if (!p.target_selector.empty()) out["target_selector"] = p.target_selector;
        }
      },
      payload);
  return out;
}

bool is_synthetic_script(const StackFrame& frame) {
  return frame.is_inline || frame.is_eval || frame.script_url.empty();
}

}  // namespace

std::string Diagnostic::to_string() const {
  static constexpr const char* kNames[] = {"MalformedRecord", "MissingField",
                                           "UnknownEventKind", "InvalidValue"};
  return "line " + std::to_string(line_no) + ": " + kNames[static_cast<int>(kind)] + "(" +
         detail + ")";
}

const std::vector<std::string>& captured_web_apis() {
  static const std::vector<std::string> apis = {
      "sendBeacon", "geolocation", "userAgent", "chargingTime",
      "dischargingTime", "movementX", "movementY", "copy",
      "paste", "visibilitychange", "force"};
  return apis;
}

bool is_captured_web_api(std::string_view name) {
  const auto& apis = captured_web_apis();
  return std::find(apis.begin(), apis.end(), name) != apis.end();
}

std::string_view to_string(EventKind kind) { return enum_name(kind, kEventKinds); }
std::string_view to_string(AccessMode mode) { return enum_name(mode, kModes); }
std::string_view to_string(StorageMechanism mechanism) {
  return enum_name(mechanism, kMechanisms);
}
std::string_view to_string(MutationKind kind) { return enum_name(kind, kMutations); }
std::string_view to_string(DomCall call) { return enum_name(call, kDomCalls); }

TraceParseResult parse_trace_log(std::string_view text) {
  TraceParseResult result;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    TraceEvent event;
    try {
      const auto page_url = parse_record(line, event);
      if (result.log.page_url.empty() && !page_url.empty()) result.log.page_url = page_url;
      result.log.events.push_back(std::move(event));
    } catch (const RecordError& e) {
      result.diagnostics.push_back({line_no, e.kind, e.detail});
    } catch (const json::exception& e) {
      result.diagnostics.push_back({line_no, DiagnosticKind::kInvalidValue, e.what()});
    }
  }
  if (result.log.page_url.empty()) {
    for (const auto& event : result.log.events) {
      if (const auto* request = std::get_if<NetworkRequest>(&event.payload);
          request && !request->page_origin.empty()) {
        result.log.page_url = request->page_origin;
        break;
      }
    }
  }
  return result;
}

TraceLog parse_trace_log_or_throw(std::string_view text) {
  auto result = parse_trace_log(text);
  if (!result.ok()) throw TraceError(result.diagnostics.front());
  return std::move(result.log);
}

TraceLog read_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_trace_log_or_throw(buffer.str());
}

std::string serialize_trace_log(const TraceLog& log) {
  std::string out;
  for (const auto& event : log.events) {
    json record = json::object();
    record["v"] = kTraceSchemaVersion;
    if (!log.page_url.empty()) record["page_url"] = log.page_url;
    record["event_kind"] = to_string(event.kind());
    record["timestamp"] = event.timestamp;
    record["call_stack"] = json::array();
    for (const auto& frame : event.call_stack) record["call_stack"].push_back(frame_to_json(frame));
    record["payload"] = payload_to_json(event.payload);
    out += record.dump();
    out += '\n';
  }
  return out;
}

ScriptArchive load_script_sources(const std::filesystem::path& archive) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(archive, ec))
    throw ArchiveUnreadable("script archive is not a readable directory: " + archive.string());
  ScriptArchive out;
  std::vector<fs::path> entries;
  for (fs::directory_iterator it(archive, ec), end; !ec && it != end; it.increment(ec))
    if (it->is_regular_file()) entries.push_back(it->path());
  if (ec) throw ArchiveUnreadable(archive.string() + ": " + ec.message());
  std::sort(entries.begin(), entries.end());

  for (const auto& entry : entries) {
    const auto name = entry.filename().string();
    const auto url = percent_decode(name);
    if (!url || url->empty()) {
      out.rejected_entries.push_back(name);
      continue;
    }
    std::ifstream in(entry, std::ios::binary);
    if (!in) throw ArchiveUnreadable("cannot read archive entry: " + entry.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    out.sources[*url] = buffer.str();
  }
  return out;
}

void write_script_archive(const std::filesystem::path& archive,
                          const std::map<std::string, std::string>& sources) {
  std::filesystem::create_directories(archive);
  for (const auto& [url, text] : sources) {
    std::ofstream out(archive / percent_encode(url), std::ios::binary);
    if (!out) throw ArchiveUnreadable("cannot write archive entry for " + url);
    out << text;
  }
}

TraceLog attach_sources(TraceLog log, std::map<std::string, std::string> sources) {
  log.script_sources = std::move(sources);
  log.uncaptured_scripts.clear();
  for (const auto& event : log.events)
    for (const auto& frame : event.call_stack)
      if (!is_synthetic_script(frame) && !log.script_sources.count(frame.script_url))
        log.uncaptured_scripts.insert(frame.script_url);
  return log;
}

}  // namespace tracefn
