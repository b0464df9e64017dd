#pragma once

// Racing agents on one machine, agent-count calibration, and homogenized
// agent counts derived from a machine performance probe.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <stop_token>
#include <thread>
#include <vector>

#include "gef/search.hpp"

namespace gef {

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed for agent `index` of a run seeded with `seed`. Injective in `index`
/// for a fixed `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed + 0x9E3779B97F4A7C15ULL * (index + 1));
}

struct AgentReport {
  SearchStatus status = SearchStatus::Unsolved;
  std::uint64_t steps = 0;
};

struct PortfolioResult {
  SearchOutcome outcome;
  std::optional<std::size_t> winner;
  std::vector<AgentReport> per_agent;
  std::chrono::duration<double, std::milli> wall_time{0};
};

/// Runs `k` concurrent searches with seeds derive_seed(seed, i). The first
/// agent to solve claims the result and stops the others. Every agent has
/// terminated when this returns.
inline PortfolioResult run_portfolio(const CspInstance& inst, std::size_t k, SearchConfig cfg, std::uint64_t seed,
                                     std::stop_token external = {}) {
  if (k == 0) throw std::invalid_argument("portfolio needs at least one agent");
  cfg.validate();

  std::vector<std::stop_source> stops(k);
  std::vector<SearchOutcome> outcomes(k);
  std::atomic<std::size_t> winner{std::numeric_limits<std::size_t>::max()};
  std::chrono::steady_clock::time_point won_at;

  auto stop_all = [&stops] {
    for (auto& s : stops) s.request_stop();
  };
  std::stop_callback on_external(external, stop_all);

  const auto started = std::chrono::steady_clock::now();
  {
    std::vector<std::jthread> agents;
    agents.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      agents.emplace_back([&, i] {
        SearchConfig mine = cfg;
        mine.seed = derive_seed(seed, i);
        outcomes[i] = gef_solve(inst, mine, stops[i].get_token());
        if (outcomes[i].status != SearchStatus::Solved) return;
        auto expected = std::numeric_limits<std::size_t>::max();
        if (winner.compare_exchange_strong(expected, i)) {
          won_at = std::chrono::steady_clock::now();
          for (std::size_t j = 0; j < stops.size(); ++j)
            if (j != i) stops[j].request_stop();
        }
      });
    }
  }
  const auto finished = std::chrono::steady_clock::now();

  PortfolioResult result;
  for (const auto& o : outcomes) result.per_agent.push_back({o.status, o.stats.steps});
  const auto w = winner.load();
  if (w != std::numeric_limits<std::size_t>::max()) {
    result.winner = w;
    result.outcome = outcomes[w];
    result.wall_time = won_at - started;
  } else {
    // Without a winner report agent 0; its status is Stopped only if the
    // caller cancelled the run.
    result.outcome = outcomes[0];
    result.wall_time = finished - started;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Regression and calibration

class DegenerateRegression : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  double x = 0;
  double y = 0;
};

struct RegressionLine {
  double slope = 0;
  double intercept = 0;
  std::optional<double> x_intercept;  ///< empty when slope == 0
};

/// Ordinary least squares y = slope·x + intercept.
inline RegressionLine linear_regression(const std::vector<Point>& points) {
  if (points.size() < 2) throw DegenerateRegression("regression needs at least two points");
  double mx = 0, my = 0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0, sxy = 0;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
  }
  if (sxx == 0) throw DegenerateRegression("regression needs at least two distinct x values");
  RegressionLine line;
  line.slope = sxy / sxx;
  line.intercept = my - line.slope * mx;
  if (line.slope != 0) line.x_intercept = -line.intercept / line.slope;
  return line;
}

struct CalibrationSample {
  std::size_t n = 0;
  std::size_t agents = 0;
  std::size_t trial = 0;
  double millis = 0;
  bool solved = false;
};

struct CalibrationReport {
  std::vector<CalibrationSample> samples;
  double slope = 0;
  double intercept = 0;
  std::optional<double> x_intercept;
  std::size_t max_agent = 1;
  bool flagged = false;                    ///< slope >= 0: no crossing of time = 0 with falling time
  std::size_t empirical_best_agents = 0;   ///< argmin over k of mean time
};

/// Fits time = slope·agents + intercept over every sample and reads the agent
/// count where the line crosses time = 0, rounded half up and clamped to
/// [1, agent_cap]. A non-negative slope yields max_agent = 1 and a flag.
inline CalibrationReport calibration_from_samples(std::vector<CalibrationSample> samples,
                                                  std::size_t agent_cap = std::numeric_limits<std::size_t>::max()) {
  std::vector<Point> pts;
  pts.reserve(samples.size());
  for (const auto& s : samples) pts.push_back({static_cast<double>(s.agents), s.millis});
  const auto line = linear_regression(pts);

  CalibrationReport report;
  report.slope = line.slope;
  report.intercept = line.intercept;
  report.x_intercept = line.x_intercept;
  if (line.slope < 0) {
    const double rounded = std::floor(*line.x_intercept + 0.5);
    const double cap = static_cast<double>(std::max<std::size_t>(agent_cap, 1));
    report.max_agent = static_cast<std::size_t>(std::clamp(rounded, 1.0, cap));
  } else {
    report.max_agent = 1;
    report.flagged = true;
  }

  std::map<std::size_t, std::pair<double, std::size_t>> per_k;
  for (const auto& s : samples) {
    auto& [sum, count] = per_k[s.agents];
    sum += s.millis;
    ++count;
  }
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [k, acc] : per_k) {
    const double mean = acc.first / static_cast<double>(acc.second);
    if (mean < best) {
      best = mean;
      report.empirical_best_agents = k;
    }
  }
  report.samples = std::move(samples);
  return report;
}

struct AgentRange {
  std::size_t lo = 1;
  std::size_t hi = 1;
};

/// Runs `trials` portfolios for every (n, k) cell, sequentially, and fits the
/// regression over all raw samples.
inline CalibrationReport calibrate_max_agents(const std::vector<std::size_t>& sizes, AgentRange range,
                                              std::size_t trials, std::optional<SearchConfig> cfg = std::nullopt,
                                              std::uint64_t seed = 0) {
  if (range.lo < 1 || range.hi < 2 || range.lo > range.hi)
    throw std::invalid_argument("agent range must satisfy 1 <= lo <= hi and hi >= 2");
  if (trials < 1) throw std::invalid_argument("calibration needs at least one trial");
  if (sizes.empty()) throw std::invalid_argument("calibration needs at least one instance size");

  std::vector<CalibrationSample> samples;
  std::uint64_t run = 0;
  for (const auto n : sizes) {
    const auto inst = make_nqueens(n);
    const auto base = cfg.value_or(SearchConfig::defaults_for(n));
    for (auto k = range.lo; k <= range.hi; ++k) {
      for (std::size_t t = 0; t < trials; ++t) {
        const auto r = run_portfolio(inst, k, base, derive_seed(seed, run++));
        samples.push_back({n, k, t, r.wall_time.count(), r.outcome.status == SearchStatus::Solved});
      }
    }
  }
  return calibration_from_samples(std::move(samples), range.hi);
}

inline void write_calibration_csv(std::ostream& os, const CalibrationReport& r) {
  os << "n,agents,trial,millis,solved\n";
  char buf[64];
  for (const auto& s : r.samples) {
    std::snprintf(buf, sizeof buf, "%.3f", s.millis);
    os << s.n << ',' << s.agents << ',' << s.trial << ',' << buf << ',' << (s.solved ? 1 : 0) << '\n';
  }
  os << '\n' << "slope,intercept,x_intercept,max_agent\n";
  os << r.slope << ',' << r.intercept << ',';
  if (r.x_intercept) os << *r.x_intercept;
  os << ',' << r.max_agent << '\n';
}

// ---------------------------------------------------------------------------
// Performance probe and homogenization

struct PerfProbe {
  double p = 0;  ///< throughput in units of 1e5 blocks per second
  std::chrono::duration<double> probe_duration{0};
};

/// Rounds of xor-shift-multiply mixing in one probe block.
inline constexpr int kProbeBlockRounds = 1024;

/// Counts completed fixed-size integer mixing blocks over `duration`.
inline PerfProbe performance_probe(std::chrono::duration<double> duration) {
  if (!(duration.count() > 0)) throw std::invalid_argument("probe duration must be positive");
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  const auto deadline = start + std::chrono::duration_cast<clock::duration>(duration);
  std::uint64_t state = 0x243F6A8885A308D3ULL;
  std::uint64_t blocks = 0;
  clock::time_point now;
  do {
    for (int r = 0; r < kProbeBlockRounds; ++r) {
      state ^= state >> 12;
      state ^= state << 25;
      state ^= state >> 27;
      state *= 0x2545F4914F6CDD1DULL;
    }
    ++blocks;
    now = clock::now();
  } while (now < deadline);
  [[maybe_unused]] static volatile std::uint64_t sink;
  sink = state;

  PerfProbe probe;
  probe.probe_duration = now - start;
  probe.p = static_cast<double>(blocks) / probe.probe_duration.count() / 1e5;
  return probe;
}

struct HomogenizationParams {
  double numerator = 7000.0;
  double divisor = 1000.0;
  std::size_t k_cap = 8;
};

/// floor((numerator - e^p) / divisor), clamped to [1, k_cap].
inline std::size_t homogenized_agent_count(double p, const HomogenizationParams& params = {}) {
  if (!std::isfinite(p)) throw std::invalid_argument("performance must be finite");
  if (p <= 0) throw std::invalid_argument("performance must be positive");
  const double raw = (params.numerator - std::exp(p)) / params.divisor;
  // Snap values a rounding error below an integer before flooring.
  const double k = std::floor(raw + 1e-9);
  if (!(k >= 1.0)) return 1;
  return static_cast<std::size_t>(std::min(k, static_cast<double>(std::max<std::size_t>(params.k_cap, 1))));
}

}  // namespace gef
