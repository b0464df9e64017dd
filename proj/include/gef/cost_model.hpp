#pragma once

// Analytic turnaround model for distributed racing search.
//
//   search time   T_O   = k_o · n² / n_a
//   overhead      T_OVE = k_ove · n_a · n
//   turnaround    T_TAT = T_O + T_OVE
//
// Adding agents stops paying off once T_O / T_OVE falls to 1, which happens at
// n_a = sqrt((k_o / k_ove) · n).

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gef {

struct OverheadModel {
  double k_o = 250.0;
  double k_ove = 1.0;

  void validate() const {
    if (!(k_o > 0) || !(k_ove > 0)) throw std::invalid_argument("model constants must be positive");
  }
};

namespace detail {
inline void check_model_args(std::size_t n, std::size_t n_a) {
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  if (n_a == 0) throw std::invalid_argument("agent count must be at least 1");
}
}  // namespace detail

inline double predict_search_time(const OverheadModel& m, std::size_t n, std::size_t n_a) {
  detail::check_model_args(n, n_a);
  const double nn = static_cast<double>(n);
  return m.k_o * nn * nn / static_cast<double>(n_a);
}

inline double predict_overhead(const OverheadModel& m, std::size_t n, std::size_t n_a) {
  detail::check_model_args(n, n_a);
  return m.k_ove * static_cast<double>(n_a) * static_cast<double>(n);
}

inline double predict_tat(const OverheadModel& m, std::size_t n, std::size_t n_a) {
  return predict_search_time(m, n, n_a) + predict_overhead(m, n, n_a);
}

/// T_O / T_OVE = (k_o / k_ove) · n / n_a².
inline double search_overhead_ratio(const OverheadModel& m, std::size_t n, std::size_t n_a) {
  detail::check_model_args(n, n_a);
  const double na = static_cast<double>(n_a);
  return (m.k_o / m.k_ove) * static_cast<double>(n) / (na * na);
}

/// Real-valued agent count at which the ratio reaches 1. Callers that need an
/// integer take the floor to stay on the search-dominated side.
inline double ultimate_agents(const OverheadModel& m, std::size_t n) {
  if (n == 0) throw std::invalid_argument("n must be at least 1");
  return std::sqrt((m.k_o / m.k_ove) * static_cast<double>(n));
}

struct TimingObservation {
  std::size_t n = 0;
  std::size_t n_a = 0;
  double t_o = 0;
  double t_ove = 0;
};

/// Least squares through the origin for each constant separately:
/// k_o on x = n²/n_a, k_ove on x = n_a·n.
inline OverheadModel fit_constants(const std::vector<TimingObservation>& obs) {
  if (obs.empty()) throw std::invalid_argument("no observations to fit");
  double sxy_o = 0, sxx_o = 0, sxy_ove = 0, sxx_ove = 0;
  for (const auto& o : obs) {
    if (o.n == 0 || o.n_a == 0) throw std::invalid_argument("observation with zero n or n_a");
    const double n = static_cast<double>(o.n);
    const double na = static_cast<double>(o.n_a);
    const double x_o = n * n / na;
    const double x_ove = na * n;
    sxy_o += x_o * o.t_o;
    sxx_o += x_o * x_o;
    sxy_ove += x_ove * o.t_ove;
    sxx_ove += x_ove * x_ove;
  }
  if (sxx_o == 0 || sxx_ove == 0) throw std::invalid_argument("all regressors are zero");
  return {sxy_o / sxx_o, sxy_ove / sxx_ove};
}

struct CurveRow {
  std::size_t n = 0;
  std::size_t n_a = 0;
  double t_o = 0;
  double t_ove = 0;
  double t_tat = 0;
  double ratio = 0;
};

inline std::vector<CurveRow> model_curves(const OverheadModel& m, const std::vector<std::size_t>& n_values,
                                          const std::vector<std::size_t>& n_a_values) {
  if (n_values.empty() || n_a_values.empty()) throw std::invalid_argument("empty value list");
  std::vector<CurveRow> rows;
  rows.reserve(n_values.size() * n_a_values.size());
  for (const auto n : n_values)
    for (const auto na : n_a_values)
      rows.push_back({n, na, predict_search_time(m, n, na), predict_overhead(m, n, na), predict_tat(m, n, na),
                      search_overhead_ratio(m, n, na)});
  return rows;
}

/// Writes `n,n_a,t_o,t_ove,t_tat,ratio` rows for the Cartesian product.
inline void emit_curves(const OverheadModel& m, const std::vector<std::size_t>& n_values,
                        const std::vector<std::size_t>& n_a_values, std::ostream& out) {
  const auto rows = model_curves(m, n_values, n_a_values);
  out << "n,n_a,t_o,t_ove,t_tat,ratio\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", r.n, r.n_a, r.t_o, r.t_ove, r.t_tat,
                  r.ratio);
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing curve output");
}

/// Reads rows with header `n,n_a,t_o,t_ove` (extra trailing columns ignored).
inline std::vector<TimingObservation> read_observations(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("observation file is empty");
  if (line.rfind("n,n_a,t_o,t_ove", 0) != 0)
    throw std::invalid_argument("observation header must start with n,n_a,t_o,t_ove");
  std::vector<TimingObservation> obs;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::istringstream row(line);
    TimingObservation o;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> o.n >> c1 >> o.n_a >> c2 >> o.t_o >> c3 >> o.t_ove) || c1 != ',' || c2 != ',' || c3 != ',')
      throw std::invalid_argument("malformed observation row: " + line);
    obs.push_back(o);
  }
  return obs;
}

}  // namespace gef
