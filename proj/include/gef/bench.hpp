#pragma once

// Benchmark records and the GEF vs backtracking comparison harness.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gef/backtrack.hpp"
#include "gef/portfolio.hpp"
#include "gef/search.hpp"

namespace gef {

enum class Method { Gef, Backtrack, Portfolio };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::Gef: return "gef";
    case Method::Backtrack: return "backtrack";
    case Method::Portfolio: return "portfolio";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "gef") return Method::Gef;
  if (s == "backtrack") return Method::Backtrack;
  if (s == "portfolio") return Method::Portfolio;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct RunRecord {
  Method method = Method::Gef;
  std::size_t n = 0;
  std::size_t agents = 1;
  std::uint64_t seed = 0;
  std::size_t trial = 0;
  double millis = 0;
  bool solved = false;
  std::uint64_t steps = 0;  ///< move steps for gef/portfolio, search nodes for backtrack
};

inline constexpr const char* kRunRecordHeader = "method,n,agents,seed,trial,millis,solved,steps";

inline void write_run_records(std::ostream& os, const std::vector<RunRecord>& rows) {
  os << kRunRecordHeader << '\n';
  char millis[32];
  for (const auto& r : rows) {
    std::snprintf(millis, sizeof millis, "%.3f", r.millis);
    os << to_string(r.method) << ',' << r.n << ',' << r.agents << ',' << r.seed << ',' << r.trial << ',' << millis
       << ',' << (r.solved ? 1 : 0) << ',' << r.steps << '\n';
  }
  if (!os) throw std::runtime_error("failed writing run records");
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::vector<RunRecord> read_run_records(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kRunRecordHeader) throw std::invalid_argument("bad run record header");
  std::vector<RunRecord> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw std::invalid_argument("bad run record row: " + line);
    try {
      RunRecord r;
      r.method = parse_method(f[0]);
      r.n = std::stoul(f[1]);
      r.agents = std::stoul(f[2]);
      r.seed = std::stoull(f[3]);
      r.trial = std::stoul(f[4]);
      r.millis = std::stod(f[5]);
      r.solved = f[6] == "1";
      r.steps = std::stoull(f[7]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("bad run record row: " + line);
    }
  }
  return rows;
}

struct BenchOptions {
  std::size_t n = 28;
  std::size_t trials = 100;
  std::vector<Method> methods{Method::Gef, Method::Backtrack};
  std::size_t agents = 3;  ///< for Method::Portfolio
  std::uint64_t seed = 0;
  std::optional<SearchConfig> config;
};

struct BenchSummary {
  std::vector<RunRecord> records;
  double backtrack_median_millis = 0;
  double gef_faster_fraction = 0;    ///< gef runs faster than the backtracking median
  std::size_t gef_distinct_millis = 0;
  std::size_t backtrack_distinct_steps = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

inline BenchSummary run_bench(const BenchOptions& opts) {
  if (opts.trials < 1) throw std::invalid_argument("bench needs at least one trial");
  const auto inst = make_nqueens(opts.n);
  const auto base = opts.config.value_or(SearchConfig::defaults_for(opts.n));
  BenchSummary sum;
  using ms = std::chrono::duration<double, std::milli>;

  for (std::size_t t = 0; t < opts.trials; ++t) {
    const auto trial_seed = derive_seed(opts.seed, t);
    for (const auto m : opts.methods) {
      RunRecord r;
      r.method = m;
      r.n = opts.n;
      r.trial = t;
      if (m == Method::Backtrack) {
        const auto start = std::chrono::steady_clock::now();
        const auto bt = backtrack_solve(inst);
        r.millis = ms(std::chrono::steady_clock::now() - start).count();
        r.solved = bt.solution.has_value();
        r.steps = bt.nodes;
      } else if (m == Method::Gef) {
        auto cfg = base;
        cfg.seed = trial_seed;
        const auto out = gef_solve(inst, cfg);
        r.seed = trial_seed;
        r.millis = out.stats.wall_time.count();
        r.solved = out.status == SearchStatus::Solved;
        r.steps = out.stats.steps;
      } else {
        const auto out = run_portfolio(inst, opts.agents, base, trial_seed);
        r.agents = opts.agents;
        r.seed = trial_seed;
        r.millis = out.wall_time.count();
        r.solved = out.outcome.status == SearchStatus::Solved;
        r.steps = out.outcome.stats.steps;
      }
      sum.records.push_back(r);
    }
  }

  std::vector<double> bt_times, gef_times;
  std::set<std::uint64_t> bt_steps;
  std::set<double> gef_distinct;
  for (const auto& r : sum.records) {
    if (r.method == Method::Backtrack) {
      bt_times.push_back(r.millis);
      bt_steps.insert(r.steps);
    } else if (r.method == Method::Gef) {
      gef_times.push_back(r.millis);
      gef_distinct.insert(std::round(r.millis * 1000.0) / 1000.0);
    }
  }
  sum.backtrack_median_millis = median(bt_times);
  sum.backtrack_distinct_steps = bt_steps.size();
  sum.gef_distinct_millis = gef_distinct.size();
  if (!gef_times.empty() && !bt_times.empty()) {
    const auto faster = std::count_if(gef_times.begin(), gef_times.end(),
                                      [&](double t) { return t < sum.backtrack_median_millis; });
    sum.gef_faster_fraction = static_cast<double>(faster) / static_cast<double>(gef_times.size());
  }
  return sum;
}

}  // namespace gef
