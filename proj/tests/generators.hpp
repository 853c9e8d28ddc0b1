#pragma once

// Hand-rolled random generators for property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tracefn/trace.hpp"

namespace tracefn::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  std::uint64_t next() { return rng_(); }
  // Uniform in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool coin(double p = 0.5) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(items.size()) - 1))];
  }
  std::string word(int min_len, int max_len, std::string_view alphabet =
                                                 "abcdefghijklmnopqrstuvwxyz") {
    std::string out;
    const auto n = range(min_len, max_len);
    for (std::int64_t i = 0; i < n; ++i)
      out += alphabet[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

// A pool of source functions a random stack draws frames from.
struct FunctionPool {
  std::vector<StackFrame> frames;
};

inline FunctionPool make_function_pool(Gen& g, int scripts, int functions) {
  FunctionPool pool;
  std::vector<std::string> urls;
  for (int s = 0; s < scripts; ++s)
    urls.push_back("https://" + g.word(3, 8) + ".com/" + g.word(2, 6) + ".js");
  for (int f = 0; f < functions; ++f) {
    StackFrame frame;
    frame.script_url = g.pick(urls);
    frame.function_name = g.coin(0.15) ? std::string() : g.word(1, 10);
    frame.line = g.range(1, 400);
    frame.column = g.range(1, 120);
    frame.scope = {g.range(0, 4), g.range(0, 6), g.range(0, 3), g.range(0, 3)};
    pool.frames.push_back(frame);
  }
  return pool;
}

inline std::vector<StackFrame> random_stack(Gen& g, const FunctionPool& pool, int max_depth) {
  std::vector<StackFrame> stack;
  const auto depth = g.range(1, max_depth);
  for (std::int64_t i = 0; i < depth; ++i) stack.push_back(g.pick(pool.frames));
  return stack;
}

inline EventPayload random_payload(Gen& g, const std::vector<std::string>& request_urls) {
  switch (g.range(0, 3)) {
    case 0: {
      NetworkRequest r;
      r.url = g.pick(request_urls);
      r.method = g.coin() ? "GET" : "POST";
      if (g.coin(0.8)) r.status_code = static_cast<int>(g.pick(std::vector<std::int64_t>{200, 204, 404}));
      r.resource_type = g.pick(std::vector<std::string>{"", "script", "image", "xmlhttprequest"});
      r.page_origin = "https://page.example.com/";
      return r;
    }
    case 1: {
      DomModification d;
      d.target_selector = "#" + g.word(1, 5);
      d.mutation_kind = static_cast<MutationKind>(g.range(0, 2));
      d.dom_call = static_cast<DomCall>(g.range(0, 5));
      return d;
    }
    case 2: {
      StorageAccess s;
      s.mechanism = g.coin() ? StorageMechanism::kCookie : StorageMechanism::kLocalStorage;
      s.mode = g.coin() ? AccessMode::kGet : AccessMode::kSet;
      s.key = g.word(0, 6);
      return s;
    }
    default: {
      WebApiCall w;
      w.api_name = g.pick(captured_web_apis());
      w.mode = g.coin() ? AccessMode::kGet : AccessMode::kSet;
      if (g.coin(0.3)) w.target_selector = "." + g.word(1, 4);
      return w;
    }
  }
}

inline TraceLog random_trace(Gen& g, int events, int pool_size = 12, int max_depth = 5,
                             std::vector<std::string> request_urls = {}) {
  if (request_urls.empty())
    for (int i = 0; i < 6; ++i)
      request_urls.push_back("https://" + g.word(3, 7) + ".net/" + g.word(1, 6) + "?q=" + g.word(0, 3));
  const auto pool = make_function_pool(g, 3, pool_size);
  TraceLog log;
  log.page_url = "https://page.example.com/";
  for (int i = 0; i < events; ++i) {
    TraceEvent e;
    e.timestamp = static_cast<double>(i) * 1.5 + g.unit();
    e.call_stack = random_stack(g, pool, max_depth);
    e.payload = random_payload(g, request_urls);
    log.events.push_back(std::move(e));
  }
  return log;
}

}  // namespace tracefn::testing
