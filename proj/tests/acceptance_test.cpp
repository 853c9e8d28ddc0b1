// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

#include "abp_oracle.hpp"
#include "generators.hpp"
#include "js_gen.hpp"
#include "js_oracle.hpp"
#include "label_laws.hpp"
#include "synthetic.hpp"
#include "test_support.hpp"
#include "tracefn/classifier.hpp"
#include "tracefn/features.hpp"
#include "tracefn/filterlist.hpp"
#include "tracefn/graph.hpp"
#include "tracefn/surrogate.hpp"
#include "tracefn/url.hpp"

namespace {

using namespace tracefn;
using testing::read_fixture;
using Clock = std::chrono::steady_clock;

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    failed_ = failed_ || !ok;
  }
  bool failed() const { return failed_; }
  const std::vector<std::string>& failures() const { return failures_; }

 private:
  bool failed_ = false;
  std::vector<std::string> failures_;
};

int failed_criteria = 0;

template <typename Body>
void criterion(const std::string& name, Body body) {
  Check check;
  std::string detail;
  try {
    detail = body(check);
  } catch (const std::exception& e) {
    check.expect(false, std::string("exception: ") + e.what());
  }
  if (check.failed()) {
    ++failed_criteria;
    std::cout << "FAIL " << name;
    for (const auto& f : check.failures()) std::cout << " | " << f;
    std::cout << "\n";
  } else {
    std::cout << "PASS " << name << " (" << detail << ")\n";
  }
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

std::string mouse_fixture(Check& c) {
  const auto start = Clock::now();
  const auto graph = build_graph(parse_trace_log_or_throw(read_fixture("mouse_tracking.jsonl")));
  std::map<std::string, NodeId> fn;
  for (const auto& [id, node] : function_nodes(graph)) fn[node.function_name] = id;
  c.expect(fn.size() == 3 && function_nodes(graph).size() == 3, "exactly 3 function nodes");

  std::map<ActivityKind, std::size_t> activities;
  for (const auto& [id, node] : graph.nodes())
    if (const auto* a = std::get_if<ActivityNode>(&node)) ++activities[a->kind];
  c.expect(activities[ActivityKind::kWebApi] == 1, "one web-API node");
  c.expect(activities[ActivityKind::kStorage] == 1, "one storage node");
  c.expect(activities[ActivityKind::kNetwork] == 1, "one network node");

  std::set<std::pair<std::string, std::string>> calls;
  std::set<std::pair<std::string, ActivityKind>> behavioral;
  const auto name_of = [&](NodeId id) {
    const auto* f = graph.find_function(id);
    return f ? f->function_name : std::string();
  };
  for (const auto& e : graph.edges()) {
    if (e.kind == EdgeKind::kCall) {
      calls.insert({name_of(e.src), name_of(e.dst)});
      continue;
    }
    const auto* src = std::get_if<ActivityNode>(graph.find(e.src));
    const auto* dst = std::get_if<ActivityNode>(graph.find(e.dst));
    if (src && !name_of(e.dst).empty()) behavioral.insert({name_of(e.dst), src->kind});
    if (dst && !name_of(e.src).empty()) behavioral.insert({name_of(e.src), dst->kind});
  }
  c.expect(calls == std::set<std::pair<std::string, std::string>>{{"getMouseMove", "updateCookie"},
                                                                  {"updateCookie", "sendReq"}},
           "call edges getMouseMove->updateCookie->sendReq");
  c.expect(behavioral.count({"getMouseMove", ActivityKind::kWebApi}) == 1, "web-API edge");
  c.expect(behavioral.count({"updateCookie", ActivityKind::kStorage}) == 1, "storage edge");
  c.expect(behavioral.count({"sendReq", ActivityKind::kNetwork}) == 1, "network edge");

  if (fn.size() == 3) {
    const auto send = extract_features(graph, fn.at("sendReq"));
    const auto update = extract_features(graph, fn.at("updateCookie"));
    const auto mouse = extract_features(graph, fn.at("getMouseMove"));
    c.expect(send[Feature::kIsGateway] == 1, "sendReq is_gateway=1");
    c.expect(update[Feature::kIsGateway] == 0 && mouse[Feature::kIsGateway] == 0, "others not gateways");
    c.expect(update[Feature::kCookieSetter] == 1, "updateCookie cookie_setter=1");
    c.expect(send[Feature::kCookieSetter] == 0 && mouse[Feature::kCookieSetter] == 0, "cookie_setter elsewhere 0");
    c.expect(mouse[Feature::kApiGetter] == 1, "getMouseMove api_getter=1");
    c.expect(send[Feature::kApiGetter] == 0 && update[Feature::kApiGetter] == 0, "api_getter elsewhere 0");
    for (const auto* v : {&send, &update, &mouse}) c.expect((*v)[Feature::kRequestsSent] == 1, "requests_sent=1");
  }
  const auto elapsed = seconds_since(start);
  c.expect(elapsed < 1.0, "runtime " + fmt(elapsed) + " s >= 1 s");
  return "exact, " + fmt(elapsed * 1000) + " ms";
}

std::string gateway_fixture(Check& c) {
  const auto log = parse_trace_log_or_throw(read_fixture("gateway_mixed.jsonl"));
  const auto graph = build_graph(log);
  const auto labels = label_functions(log, graph, parse_rules(read_fixture("gateway_filters.txt")));
  std::map<std::string, Label> send_by_caller;
  for (const auto& l : labels) {
    const auto* fn = graph.find_function(l.node);
    if (fn->function_name != "sendRequest") continue;
    for (const auto i : graph.in_edges(l.node))
      if (const auto* caller = graph.find_function(graph.edges()[i].src))
        send_by_caller[caller->function_name] = l.label;
  }
  std::size_t send_nodes = 0;
  for (const auto& [id, fn] : function_nodes(graph)) send_nodes += fn.function_name == "sendRequest";
  c.expect(send_nodes == 2, "sendRequest has " + std::to_string(send_nodes) + " nodes, want 2");
  c.expect(send_by_caller.count("getIdentifier") && send_by_caller["getIdentifier"] == Label::kTracking,
           "getIdentifier-context sendRequest tracking");
  c.expect(send_by_caller.count("loadImage") && send_by_caller["loadImage"] == Label::kNonTracking,
           "loadImage-context sendRequest non-tracking");
  return "2 sendRequest nodes, tracking/non-tracking split exact";
}

std::string labeling_laws(Check& c) {
  testing::Gen gen(7001);
  std::size_t held = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto raw = testing::random_rule_list(gen);
    const auto log = testing::random_trace(gen, static_cast<int>(gen.range(1, 25)), 10, 5,
                                           testing::random_request_urls(gen));
    const auto graph = build_graph(log);
    const auto labels = label_functions(log, graph, parse_rules(testing::join_rules(raw)));
    const auto violation = testing::check_label_laws(log, graph, raw, labels);
    c.expect(violation.empty(), "trial " + std::to_string(trial) + ": " + violation);
    held += violation.empty();
  }
  return std::to_string(held) + "/1000 instances";
}

std::string matcher_oracle(Check& c) {
  std::size_t triples = 0, agree = 0;
  std::set<Verdict> seen;
  const auto run = [&](const std::vector<std::string>& raw, const std::string& url,
                       const std::string& page, ResourceType type) {
    const MatchContext ctx{page, type, is_third_party(url, page)};
    const auto host = parse_url(page);
    const testing::OracleContext octx{
        host ? host->host : "", type == ResourceType::kOther ? "" : std::string(to_string(type)),
        ctx.is_third_party};
    const auto expected = testing::OracleRuleList(raw).decide(url, octx);
    const auto got = match(parse_rules(testing::join_rules(raw)), url, ctx);
    const auto want = expected.verdict == testing::OracleVerdict::kBlock   ? Verdict::kBlock
                      : expected.verdict == testing::OracleVerdict::kAllow ? Verdict::kAllow
                                                                           : Verdict::kNoMatch;
    const bool ok = want == got.verdict &&
                    (want == Verdict::kNoMatch || expected.rule == got.matched_rule);
    c.expect(ok, raw.back() + " | " + url + " | " + page);
    agree += ok;
    ++triples;
    seen.insert(got.verdict);
  };
  for (const auto& raw : testing::curated_rules())
    for (const auto& url : testing::curated_urls())
      for (const auto& page : testing::curated_pages())
        for (const auto type : {ResourceType::kOther, ResourceType::kScript, ResourceType::kImage,
                                ResourceType::kXmlHttpRequest})
          run({raw}, url, page, type);
  std::vector<std::string> blocks, exceptions;
  for (const auto& r : testing::curated_rules()) (r.rfind("@@", 0) == 0 ? exceptions : blocks).push_back(r);
  for (const auto& b : blocks)
    for (const auto& e : exceptions)
      for (const auto& url : testing::curated_urls())
        run({b, e}, url, "https://shop.example.com/", ResourceType::kScript);
  c.expect(triples >= 200, "only " + std::to_string(triples) + " triples");
  c.expect(seen.size() == 3, "not every verdict exercised");
  return std::to_string(agree) + "/" + std::to_string(triples) + " triples agree";
}

std::string classifier(Check& c) {
  const auto start = Clock::now();
  const auto data = testing::separable_dataset(36, 2000, 34);
  ForestParams params;
  params.num_trees = 100;
  params.max_depth = 20;
  params.seed = 11;
  const auto parts = split(data, {}, 11);
  const auto forest = train(parts.train, params);
  const auto held_out = evaluate(forest, parts.test);
  c.expect(held_out.f1 >= 0.95, "held-out F1 " + fmt(held_out.f1) + " < 0.95");

  const auto cv = cross_validate(data, 5, params, 11);
  c.expect(cv.stddev_f1 <= 0.03, "CV stddev " + fmt(cv.stddev_f1) + " > 0.03");

  const auto reference = save_model(forest);
  for (const unsigned threads : {1u, 3u, 8u}) {
    auto p = params;
    p.threads = threads;
    c.expect(save_model(train(parts.train, p)) == reference,
             "model differs with " + std::to_string(threads) + " threads");
  }
  const auto elapsed = seconds_since(start);
  c.expect(elapsed < 60.0, "runtime " + fmt(elapsed) + " s >= 60 s");
  return "F1 " + fmt(held_out.f1) + ", CV stddev " + fmt(cv.stddev_f1) + ", threads 1/3/8/auto identical, " +
         fmt(elapsed) + " s";
}

std::string info_gain(Check& c) {
  testing::Gen g(4);
  Dataset d{testing::numbered_schema(2), {}};
  double tracking = 0;
  for (int i = 0; i < 500; ++i) {
    const bool t = g.coin(0.38);
    tracking += t;
    d.rows.push_back({"", {t ? 1.0 : 0.0, 3.5}, t});
  }
  const double p = tracking / 500;
  const double h = -p * std::log2(p) - (1 - p) * std::log2(1 - p);
  const auto identical = information_gain(d, 0).bits;
  c.expect(std::abs(identical - h) <= 1e-9, "identical feature " + fmt(identical) + " vs H " + fmt(h));
  c.expect(information_gain(d, 1).bits == 0.0, "constant feature nonzero");

  // Values 1..4 in pairs; labels TT TN NN NT: H = 1, H(label | value) = 0.5.
  Dataset hand{testing::numbered_schema(1), {}};
  const std::vector<double> values = {1, 1, 2, 2, 3, 3, 4, 4};
  const std::vector<bool> labels = {true, true, true, false, false, false, false, true};
  for (std::size_t i = 0; i < 8; ++i) hand.rows.push_back({"", {values[i]}, labels[i]});
  const auto gain = information_gain(hand, 0);
  c.expect(std::abs(gain.bits - 0.5) <= 1e-9, "8-row fixture " + fmt(gain.bits) + " bits, want 0.5");
  c.expect(std::abs(gain.percent - 50.0) <= 1e-9, "8-row fixture percent");
  return "H(label) " + fmt(h) + " bits, constant 0, 8-row 0.5 bits";
}

std::string surrogate(Check& c) {
  const std::string url = "https://assets.adobedtm.com/launch-EN1234abcd.min.js";
  const auto loader = read_fixture("satellite_loader.js");
  const auto out = neutralize(url, loader, {{url, "track", 7, 22}});
  c.expect(out.report.neutralized.size() == 1, "satellite site not neutralized");
  c.expect(out.rewritten.find("t._satellite.track(o[0], o[1])") == std::string::npos, "targeted call kept");
  c.expect(out.rewritten.find("_satellite.track(\"pageload\")") != std::string::npos, "untargeted call altered");
  c.expect(verify_integrity(out.rewritten), "satellite rewrite fails integrity");
  const auto pageload = loader.find("})), _satellite.track(\"pageload\")}");
  c.expect(pageload != std::string::npos &&
               out.rewritten.substr(out.rewritten.size() - (loader.size() - pageload)) ==
                   loader.substr(pageload),
           "text after the replacement not byte-identical");

  testing::Gen g(2024);
  std::size_t planted = 0, neutralized = 0, decoys = 0, skipped = 0, exact = 0;
  for (int i = 0; i < 100; ++i) {
    const auto script = testing::planted_script(g, "https://s" + std::to_string(i) + ".example/x.js");
    std::vector<CallSite> sites = script.neutralized;
    for (const auto& s : script.skipped) sites.push_back(s.site);
    const auto result = neutralize(script.url, script.source, sites);
    planted += script.neutralized.size();
    decoys += script.skipped.size();
    neutralized += result.report.neutralized.size();
    skipped += result.report.skipped.size();
    const bool ok = result.rewritten == script.expected && result.report.neutralized == script.neutralized &&
                    result.report.skipped == script.skipped && result.report.total() == sites.size();
    c.expect(ok, "planted script " + std::to_string(i) + " accounting");
    c.expect(verify_integrity(result.rewritten), "planted script " + std::to_string(i) + " integrity");
    exact += ok;
  }

  testing::Gen a(77);
  testing::JsGen js(a);
  std::size_t agree = 0;
  for (int i = 0; i < 500; ++i) {
    const auto [before, after] = js.context();
    const auto call = js.call(3);
    const std::string head = "function w() {\n  " + before;
    const auto source = head + call.text + after + "\n}\n";
    const auto begin = head.size(), end = begin + call.text.size();
    const auto [line, column] = testing::position_of(source, begin + call.name_offset);
    const auto oracle = testing::JsOracle(source).call_end(begin, begin + call.name_offset);
    bool ok = oracle == std::optional<std::size_t>(end);
    try {
      ok = ok && locate_call_extent(source, {"u", call.name, line, column}) == Span{begin, end};
    } catch (const std::exception&) {
      ok = false;
    }
    c.expect(ok, "adversarial expression " + std::to_string(i));
    agree += ok;
  }
  return "satellite fixture exact; " + std::to_string(exact) + "/100 scripts exact (" + std::to_string(neutralized) + "/" +
         std::to_string(planted) + " planted neutralized, " + std::to_string(skipped) + "/" +
         std::to_string(decoys) + " decoys skipped); " + std::to_string(agree) + "/500 extents agree";
}

std::string rule_self_match(Check& c) {
  testing::Gen g(404);
  std::size_t held = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto url = testing::random_script_url(g);
    const bool ok = emit_rule(url).matches(url);
    c.expect(ok, url);
    held += ok;
  }
  return std::to_string(held) + "/1000 URLs";
}

}  // namespace

int main() {
  criterion("graph+features: mouse tracking fixture", mouse_fixture);
  criterion("labeling: mixed gateway fixture", gateway_fixture);
  criterion("labeling laws: 1000 random instances", labeling_laws);
  criterion("matcher: reference oracle agreement", matcher_oracle);
  criterion("classifier: separable synthetic dataset", classifier);
  criterion("information gain: extremes and hand fixture", info_gain);
  criterion("surrogate: satellite fixture, planted corpus, adversarial extents", surrogate);
  criterion("replacement rules: self-match on 1000 URLs", rule_self_match);
  std::cout << (failed_criteria ? "FAILED " : "ALL PASSED ") << failed_criteria << " failing criteria\n";
  return failed_criteria ? 1 : 0;
}
