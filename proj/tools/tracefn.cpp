// Pipeline driver: each subcommand runs one stage, writes its artifact under
// --out and prints a JSON summary (also saved as <out>/<stage>.json).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tracefn/classifier.hpp"
#include "tracefn/csv.hpp"
#include "tracefn/features.hpp"
#include "tracefn/filterlist.hpp"
#include "tracefn/graph.hpp"
#include "tracefn/surrogate.hpp"
#include "tracefn/trace.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

using namespace tracefn;

struct Config {
  std::string traces;
  std::string scripts;
  std::string filters;
  std::string model;
  std::string out = "tracefn-out";
  std::uint64_t seed = 0;
  int trees = 1000;
  int depth = 20;

  fs::path out_path(const std::string& name) const { return fs::path(out) / name; }
  fs::path model_path() const { return model.empty() ? out_path("model.json") : fs::path(model); }
};

class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw StageError("cannot write " + path.string());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw StageError(std::string(flag) + " is required");
}

// A trace file per page; a directory means every *.jsonl inside, sorted.
std::vector<fs::path> trace_files(const std::string& traces) {
  require(traces, "--traces");
  if (!fs::exists(traces)) throw StageError("no such trace path: " + traces);
  if (!fs::is_directory(traces)) return {traces};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(traces))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw StageError("no .jsonl traces in " + traces);
  return files;
}

struct Page {
  fs::path file;
  TraceLog log;
  std::vector<Diagnostic> diagnostics;
  PageGraph graph;
};

struct Corpus {
  std::vector<Page> pages;
  ScriptArchive archive;
};

Corpus load_corpus(const Config& cfg) {
  Corpus corpus;
  if (!cfg.scripts.empty()) {
    if (!fs::is_directory(cfg.scripts)) throw StageError("no such script archive: " + cfg.scripts);
    corpus.archive = load_script_sources(cfg.scripts);
  }
  for (const auto& file : trace_files(cfg.traces)) {
    auto parsed = parse_trace_log(read_file(file));
    Page page{file, std::move(parsed.log), std::move(parsed.diagnostics), {}};
    auto sources = page.log.script_sources;
    sources.insert(corpus.archive.sources.begin(), corpus.archive.sources.end());
    page.log = attach_sources(std::move(page.log), std::move(sources));
    page.graph = build_graph(page.log);
    corpus.pages.push_back(std::move(page));
  }
  return corpus;
}

void emit(const Config& cfg, const std::string& stage, Json summary) {
  Json doc;
  doc["stage"] = stage;
  for (auto& [k, v] : summary.items()) doc[k] = std::move(v);
  const auto text = doc.dump(2) + "\n";
  write_file(cfg.out_path(stage + ".json"), text);
  std::cout << text;
}

double percent(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

Json metrics_json(const Metrics& m) {
  return {{"tp", m.tp},        {"fp", m.fp},         {"tn", m.tn},          {"fn", m.fn},
          {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"accuracy", m.accuracy}};
}

void run_ingest(const Config& cfg) {
  const auto corpus = load_corpus(cfg);
  std::size_t events = 0, diagnostics = 0;
  std::set<std::string> referenced, uncaptured;
  std::string report;
  for (const auto& page : corpus.pages) {
    events += page.log.events.size();
    diagnostics += page.diagnostics.size();
    for (const auto& d : page.diagnostics) report += page.file.filename().string() + ": " + d.to_string() + "\n";
    for (const auto& e : page.log.events)
      for (const auto& f : e.call_stack)
        if (!f.is_inline && !f.is_eval && !f.script_url.empty()) referenced.insert(f.script_url);
    uncaptured.insert(page.log.uncaptured_scripts.begin(), page.log.uncaptured_scripts.end());
  }
  write_file(cfg.out_path("diagnostics.txt"), report);
  emit(cfg, "ingest",
       {{"pages", corpus.pages.size()},
        {"events", events},
        {"diagnostics", diagnostics},
        {"scripts_referenced", referenced.size()},
        {"scripts_captured", referenced.size() - uncaptured.size()},
        {"scripts_uncaptured", uncaptured.size()},
        {"archive_rejected", corpus.archive.rejected_entries.size()}});
}

void run_graph(const Config& cfg) {
  const auto corpus = load_corpus(cfg);
  Json pages = Json::array();
  std::size_t nodes = 0, edges = 0, functions = 0;
  for (const auto& page : corpus.pages) {
    const auto name = page.file.stem().string() + ".json";
    write_file(cfg.out_path("graphs") / name, dump_graph(page.graph));
    const auto fns = function_nodes(page.graph).size();
    nodes += page.graph.nodes().size();
    edges += page.graph.edges().size();
    functions += fns;
    pages.push_back({{"graph", "graphs/" + name},
                     {"page_url", page.graph.page_url()},
                     {"nodes", page.graph.nodes().size()},
                     {"edges", page.graph.edges().size()},
                     {"function_nodes", fns},
                     {"skipped_events", page.graph.skipped_events()}});
  }
  emit(cfg, "graph", {{"nodes", nodes}, {"edges", edges}, {"function_nodes", functions}, {"pages", pages}});
}

void run_features(const Config& cfg) {
  const auto corpus = load_corpus(cfg);
  std::vector<FeatureRow> rows;
  for (const auto& page : corpus.pages) {
    auto page_rows = extract_all_features(page.graph);
    rows.insert(rows.end(), std::make_move_iterator(page_rows.begin()),
                std::make_move_iterator(page_rows.end()));
  }
  write_file(cfg.out_path("features.csv"), write_feature_matrix(rows));
  emit(cfg, "features",
       {{"rows", rows.size()},
        {"pages", corpus.pages.size()},
        {"schema_version", FeatureSchema::current().version},
        {"width", FeatureSchema::current().names.size()}});
}

RuleSet load_filters(const std::string& filters) {
  require(filters, "--filters");
  if (!fs::exists(filters)) throw StageError("no such filter list: " + filters);
  std::vector<fs::path> files;
  if (fs::is_directory(filters)) {
    for (const auto& entry : fs::directory_iterator(filters))
      if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(filters);
  }
  std::string text;
  for (const auto& f : files) text += read_file(f) + "\n";
  return parse_rules(text);
}

void run_label(const Config& cfg) {
  const auto rules = load_filters(cfg.filters);
  const auto corpus = load_corpus(cfg);
  std::string out;
  std::map<Label, std::size_t> counts;
  std::size_t requests = 0, tracking_requests = 0;
  for (const auto& page : corpus.pages) {
    const auto labels = label_functions(page.log, page.graph, rules);
    for (const auto& l : labels) ++counts[l.label];
    for (const auto& r : label_requests(page.log, page.graph, rules)) {
      ++requests;
      tracking_requests += r.tracking();
    }
    out += write_labels(page.graph, labels);
  }
  write_file(cfg.out_path("labels.jsonl"), out);
  emit(cfg, "label",
       {{"functions", counts[Label::kTracking] + counts[Label::kNonTracking] + counts[Label::kExcluded]},
        {"tracking", counts[Label::kTracking]},
        {"non_tracking", counts[Label::kNonTracking]},
        {"excluded", counts[Label::kExcluded]},
        {"requests", requests},
        {"tracking_requests", tracking_requests},
        {"block_rules", rules.block_count()},
        {"exception_rules", rules.exception_count()},
        {"skipped_rule_lines", rules.diagnostics().size()}});
}

std::vector<FeatureRow> load_features(const Config& cfg) {
  return read_feature_matrix(read_file(cfg.out_path("features.csv")));
}

ForestParams forest_params(const Config& cfg) {
  if (cfg.trees < 1) throw StageError("--trees must be >= 1");
  if (cfg.depth < 1) throw StageError("--depth must be >= 1");
  ForestParams p;
  p.num_trees = cfg.trees;
  p.max_depth = cfg.depth;
  p.seed = cfg.seed;
  return p;
}

void run_train(const Config& cfg) {
  const auto params = forest_params(cfg);
  const auto rows = load_features(cfg);
  const auto labels = read_labels(read_file(cfg.out_path("labels.jsonl")));
  const auto labeled = make_dataset(rows, labels);
  const auto dataset = deduplicate(labeled);
  const auto parts = split(dataset, {}, cfg.seed);
  const auto forest = train(parts.train, params);
  write_file(cfg.model_path(), save_model(forest));

  Json ranking = Json::array();
  for (const auto& f : rank_features(dataset))
    ranking.push_back({{"feature", f.name}, {"bits", f.gain.bits}, {"percent", f.gain.percent}});
  const Json summary = {
      {"model", cfg.model_path().string()},
      {"rows", rows.size()},
      {"labeled", labeled.size()},
      {"deduplicated", dataset.size()},
      {"train", parts.train.size()},
      {"validation", parts.validation.size()},
      {"test", parts.test.size()},
      {"params", {{"trees", params.num_trees}, {"depth", params.max_depth}, {"seed", params.seed}}},
      {"validation_metrics", parts.validation.size() ? metrics_json(evaluate(forest, parts.validation)) : Json()},
      {"test_metrics", parts.test.size() ? metrics_json(evaluate(forest, parts.test)) : Json()},
      {"feature_ranking", ranking}};
  write_file(cfg.out_path("metrics.json"), summary.dump(2) + "\n");
  emit(cfg, "train", summary);
}

void run_classify(const Config& cfg) {
  const auto forest = load_model(read_file(cfg.model_path()));
  const auto rows = load_features(cfg);
  std::string out = csv::format_row(
      {"page_url", "node_id", "script_url", "function_name", "line", "column", "score", "tracking"});
  std::size_t tracking = 0;
  for (const auto& row : rows) {
    const auto p = predict(forest, row.features);
    tracking += p.tracking;
    out += csv::format_row({row.page_url, row.node.to_hex(), row.script_url, row.function_name,
                            std::to_string(row.line), std::to_string(row.column),
                            csv::format_number(p.score), p.tracking ? "1" : "0"});
  }
  write_file(cfg.out_path("predictions.csv"), out);
  emit(cfg, "classify",
       {{"rows", rows.size()}, {"tracking", tracking}, {"tracking_percent", percent(tracking, rows.size())}});
}

// page_url -> predicted tracking nodes.
std::map<std::string, std::set<NodeId>> load_predictions(const Config& cfg) {
  const auto table = csv::parse(read_file(cfg.out_path("predictions.csv")));
  if (table.empty() || table[0].size() != 8 || table[0][0] != "page_url")
    throw StageError("predictions.csv: bad header");
  std::map<std::string, std::set<NodeId>> out;
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].size() != 8) throw StageError("predictions.csv: bad row " + std::to_string(i + 1));
    if (table[i][7] == "1") out[table[i][0]].insert(NodeId::from_hex(table[i][1]));
  }
  return out;
}

void run_surrogate(const Config& cfg) {
  const auto predicted = load_predictions(cfg);
  const auto corpus = load_corpus(cfg);
  std::vector<CallSiteTarget> targets;
  std::map<std::string, std::string> sources = corpus.archive.sources;
  for (const auto& page : corpus.pages) {
    sources.insert(page.log.script_sources.begin(), page.log.script_sources.end());
    const auto it = predicted.find(page.graph.page_url());
    if (it == predicted.end()) continue;
    auto page_targets = call_sites(page.graph, it->second);
    targets.insert(targets.end(), page_targets.begin(), page_targets.end());
  }
  const auto batch = generate_surrogates(targets, sources);
  const auto dir = cfg.out_path("surrogates");
  fs::remove_all(dir);
  const auto manifest = parse_manifest(write_surrogate_dir(dir.string(), batch));
  std::map<std::string, std::size_t> skipped;
  std::size_t failed_integrity = 0;
  for (const auto& script : batch.scripts) {
    for (const auto& s : script.report.skipped) ++skipped[std::string(to_string(s.reason))];
    if (!script.report.neutralized.empty() && !verify_integrity(script.rewritten)) ++failed_integrity;
  }
  emit(cfg, "surrogate",
       {{"scripts", batch.scripts.size()},
        {"call_sites", batch.total_sites()},
        {"neutralized", batch.neutralized_sites()},
        {"neutralized_percent", percent(batch.neutralized_sites(), batch.total_sites())},
        {"skipped", skipped},
        {"replacement_rules", manifest.rules.size()},
        {"integrity_failures", failed_integrity},
        {"manifest", "surrogates/manifest.json"}});
}

Json read_summary(const Config& cfg, const std::string& stage) {
  try {
    return Json::parse(read_file(cfg.out_path(stage + ".json")));
  } catch (const nlohmann::json::exception& e) {
    throw StageError(stage + ".json: " + e.what());
  }
}

void run_report(const Config& cfg) {
  const auto features = read_summary(cfg, "features");
  const auto label = read_summary(cfg, "label");
  const auto classify = read_summary(cfg, "classify");
  const auto surrogate = read_summary(cfg, "surrogate");
  const auto functions = features.at("rows").get<std::size_t>();
  const auto predicted = classify.at("tracking").get<std::size_t>();
  Json summary = {{"functions", functions},
                  {"labeled_tracking", label.at("tracking")},
                  {"labeled_non_tracking", label.at("non_tracking")},
                  {"tracking_functions", predicted},
                  {"tracking_fraction", functions ? static_cast<double>(predicted) / functions : 0.0},
                  {"call_sites", surrogate.at("call_sites")},
                  {"neutralized", surrogate.at("neutralized")},
                  {"neutralized_percent", surrogate.at("neutralized_percent")},
                  {"replacement_rules", surrogate.at("replacement_rules")}};
  if (fs::exists(cfg.out_path("metrics.json")))
    summary["test_metrics"] = Json::parse(read_file(cfg.out_path("metrics.json"))).at("test_metrics");
  emit(cfg, "report", summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Function-level tracking detection and surrogate generation"};
  app.require_subcommand(1);
  Config cfg;

  const auto add = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--traces", cfg.traces, "Trace JSONL file or directory of them");
    sub->add_option("--scripts", cfg.scripts, "Script archive directory");
    sub->add_option("--filters", cfg.filters, "Filter list file or directory of .txt lists");
    sub->add_option("--model", cfg.model, "Model file (default <out>/model.json)");
    sub->add_option("--out", cfg.out, "Artifact directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Seed for splits and training")->capture_default_str();
    sub->add_option("--trees", cfg.trees, "Number of trees")->capture_default_str();
    sub->add_option("--depth", cfg.depth, "Maximum tree depth")->capture_default_str();
    return sub;
  };
  const std::vector<std::pair<CLI::App*, void (*)(const Config&)>> stages = {
      {add("ingest", "Parse traces and report diagnostics"), run_ingest},
      {add("graph", "Build per-page function graphs"), run_graph},
      {add("features", "Extract the feature matrix"), run_features},
      {add("label", "Label functions with filter lists"), run_label},
      {add("train", "Train the forest on labeled features"), run_train},
      {add("classify", "Predict tracking functions"), run_classify},
      {add("surrogate", "Neutralize tracking call sites"), run_surrogate},
      {add("report", "Aggregate pipeline counts"), run_report}};

  CLI11_PARSE(app, argc, argv);
  for (const auto& [sub, run] : stages) {
    if (!sub->parsed()) continue;
    try {
      run(cfg);
      return 0;
    } catch (const std::exception& e) {
      std::cerr << "tracefn " << sub->get_name() << ": " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
