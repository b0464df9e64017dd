#pragma once

// Global-evaluation local search.
//
// The evaluation of a state is the number of distinct variable pairs whose
// values are inconsistent; a state is a solution iff its evaluation is zero.
// A neighbour differs from the current state in exactly one variable, so a
// state has Σ(|D_i| - 1) neighbours. Each step moves to a best neighbour,
// except for occasional random-walk steps and tier escalation after a run of
// non-improving steps.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <vector>

#include "gef/csp.hpp"

namespace gef {

struct EvalValue {
  std::size_t conflicts = 0;

  bool solved() const { return conflicts == 0; }
  friend auto operator<=>(const EvalValue&, const EvalValue&) = default;
};

struct Move {
  std::size_t var = 0;
  int new_value = 0;
  EvalValue resulting_eval;

  friend bool operator==(const Move&, const Move&) = default;
};

class NoMove : public std::logic_error {
 public:
  NoMove() : std::logic_error("every domain is a singleton; no neighbouring state exists") {}
};

class InvalidConfig : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SearchConfig {
  double random_walk_prob = 0.02;
  std::size_t max_tries = 100;      ///< move steps per try before a restart
  std::size_t max_restarts = 0;     ///< 0 = unbounded
  std::size_t stagnation_limit = 2; ///< non-improving steps tolerated before escalation
  std::uint64_t seed = 0;

  /// Defaults scaled to an instance of `n` variables: 100·n tries, 2·n stagnation limit.
  static SearchConfig defaults_for(std::size_t n, std::uint64_t seed = 0) {
    SearchConfig cfg;
    cfg.max_tries = 100 * std::max<std::size_t>(n, 1);
    cfg.stagnation_limit = 2 * std::max<std::size_t>(n, 1);
    cfg.seed = seed;
    return cfg;
  }

  void validate() const {
    if (!(random_walk_prob >= 0.0 && random_walk_prob <= 1.0))
      throw InvalidConfig("random_walk_prob must lie in [0, 1]");
    if (max_tries < 1) throw InvalidConfig("max_tries must be at least 1");
  }
};

enum class SearchStatus { Solved, Unsolved, Stopped };

inline const char* to_string(SearchStatus s) {
  switch (s) {
    case SearchStatus::Solved: return "solved";
    case SearchStatus::Unsolved: return "unsolved";
    case SearchStatus::Stopped: return "stopped";
  }
  return "?";
}

struct SearchStats {
  std::uint64_t steps = 0;
  std::uint64_t restarts = 0;
  std::uint64_t random_walk_steps = 0;
  std::uint64_t escape_steps = 0;
  std::chrono::duration<double, std::milli> wall_time{0};
  EvalValue final_eval;
};

struct SearchOutcome {
  SearchStatus status = SearchStatus::Unsolved;
  Assignment assignment;
  SearchStats stats;
};

/// Stagnation bookkeeping for tier escalation.
struct EscapeState {
  std::size_t best_seen = std::numeric_limits<std::size_t>::max();
  std::size_t stagnant_steps = 0;
  std::size_t limit = 0;

  explicit EscapeState(std::size_t stagnation_limit = 0) : limit(stagnation_limit) {}

  void reset(EvalValue start) {
    best_seen = start.conflicts;
    stagnant_steps = 0;
  }

  void observe(EvalValue now) {
    if (now.conflicts < best_seen) {
      best_seen = now.conflicts;
      stagnant_steps = 0;
    } else {
      ++stagnant_steps;
    }
  }

  bool stagnating() const { return stagnant_steps > limit; }
};

/// Number of distinct pairs (i < j) that violate the constraint relation.
inline EvalValue eval_global(const CspInstance& inst, const Assignment& a) {
  check_assignment(inst, a);
  std::size_t conflicts = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (!inst.consistent(i, a[i], j, a[j])) ++conflicts;
  return {conflicts};
}

/// eval_global(a with var := new_value) - eval_global(a), rescanning only the
/// pairs that involve `var`.
inline long eval_delta(const CspInstance& inst, const Assignment& a, std::size_t var, int new_value) {
  check_assignment(inst, a);
  if (var >= a.size()) throw MalformedAssignment("variable index out of range");
  if (!inst.domain(var).contains(new_value)) throw MalformedAssignment("value outside domain");
  long delta = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (j == var) continue;
    delta += inst.consistent(var, a[var], j, a[j]) ? 0 : -1;
    delta += inst.consistent(var, new_value, j, a[j]) ? 0 : 1;
  }
  return delta;
}

/// All single-variable changes in ascending (var, value) order.
inline std::vector<Move> neighbors(const CspInstance& inst, const Assignment& a) {
  const auto base = static_cast<long>(eval_global(inst, a).conflicts);
  std::vector<Move> moves;
  moves.reserve(inst.neighbor_count());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& d = inst.domain(i);
    for (int v = d.lo; v <= d.hi; ++v) {
      if (v == a[i]) continue;
      moves.push_back({i, v, {static_cast<std::size_t>(base + eval_delta(inst, a, i, v))}});
    }
  }
  return moves;
}

enum class MoveKind { Greedy, RandomWalk, Escape };

namespace detail {

// Incremental search state. cell(i, v) counts the variables j != i whose
// current value is inconsistent with variable i taking value v, so the delta
// of moving i to v is cell(i, v) - cell(i, a[i]).
class ConflictTable {
 public:
  explicit ConflictTable(const CspInstance& inst) : inst_(&inst), offsets_(inst.size() + 1, 0) {
    for (std::size_t i = 0; i < inst.size(); ++i) offsets_[i + 1] = offsets_[i] + inst.domain(i).size();
    cells_.assign(offsets_.back(), 0);
  }

  void reset(Assignment a) {
    check_assignment(*inst_, a);
    values_ = std::move(a);
    std::fill(cells_.begin(), cells_.end(), 0);
    const auto n = values_.size();
    std::size_t twice = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = inst_->domain(i);
      for (int v = d.lo; v <= d.hi; ++v) {
        std::uint32_t c = 0;
        for (std::size_t j = 0; j < n; ++j)
          if (j != i && !inst_->consistent(i, v, j, values_[j])) ++c;
        cell(i, v) = c;
      }
      twice += cell(i, values_[i]);
    }
    eval_ = twice / 2;
  }

  const Assignment& values() const { return values_; }
  EvalValue eval() const { return {eval_}; }

  std::size_t resulting(std::size_t i, int v) const {
    return eval_ + cell(i, v) - cell(i, values_[i]);
  }

  void apply(std::size_t i, int new_value) {
    const int old_value = values_[i];
    if (old_value == new_value) return;
    eval_ = resulting(i, new_value);
    for (std::size_t j = 0; j < values_.size(); ++j) {
      if (j == i) continue;
      const auto& d = inst_->domain(j);
      for (int v = d.lo; v <= d.hi; ++v) {
        const bool was = !inst_->consistent(j, v, i, old_value);
        const bool now = !inst_->consistent(j, v, i, new_value);
        if (was != now) {
          if (now)
            ++cell(j, v);
          else
            --cell(j, v);
        }
      }
    }
    values_[i] = new_value;
  }

  template <class Rng>
  Move random_move(Rng& rng) const {
    const auto total = inst_->neighbor_count();
    if (total == 0) throw NoMove();
    auto pick = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const auto& d = inst_->domain(i);
      const auto options = d.size() - 1;
      if (pick >= options) {
        pick -= options;
        continue;
      }
      int v = d.lo + static_cast<int>(pick);
      if (v >= values_[i]) ++v;
      return {i, v, {resulting(i, v)}};
    }
    throw NoMove();
  }

  // Uniform choice among neighbours whose resulting evaluation equals `tier`,
  // by reservoir sampling in enumeration order.
  template <class Rng>
  Move pick_in_tier(std::size_t tier, Rng& rng) const {
    Move chosen;
    std::size_t seen = 0;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const auto& d = inst_->domain(i);
      for (int v = d.lo; v <= d.hi; ++v) {
        if (v == values_[i] || resulting(i, v) != tier) continue;
        ++seen;
        if (seen == 1 || std::uniform_int_distribution<std::size_t>(0, seen - 1)(rng) == 0)
          chosen = {i, v, {tier}};
      }
    }
    return chosen;
  }

  // Lowest resulting evaluation and the lowest one strictly above it.
  std::pair<std::size_t, std::size_t> two_lowest_tiers() const {
    constexpr auto none = std::numeric_limits<std::size_t>::max();
    std::size_t lowest = none, second = none;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const auto& d = inst_->domain(i);
      for (int v = d.lo; v <= d.hi; ++v) {
        if (v == values_[i]) continue;
        const auto r = resulting(i, v);
        if (r < lowest) {
          second = lowest;
          lowest = r;
        } else if (r > lowest && r < second) {
          second = r;
        }
      }
    }
    return {lowest, second};
  }

  template <class Rng>
  std::pair<Move, MoveKind> select(const SearchConfig& cfg, EscapeState& escape, Rng& rng) const {
    if (inst_->neighbor_count() == 0) throw NoMove();
    if (cfg.random_walk_prob > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.random_walk_prob)
      return {random_move(rng), MoveKind::RandomWalk};
    const auto [lowest, second] = two_lowest_tiers();
    if (escape.stagnating()) {
      escape.stagnant_steps = 0;
      if (second != std::numeric_limits<std::size_t>::max()) return {pick_in_tier(second, rng), MoveKind::Escape};
    }
    return {pick_in_tier(lowest, rng), MoveKind::Greedy};
  }

 private:
  std::uint32_t& cell(std::size_t i, int v) { return cells_[offsets_[i] + static_cast<std::size_t>(v - inst_->domain(i).lo)]; }
  std::uint32_t cell(std::size_t i, int v) const {
    return cells_[offsets_[i] + static_cast<std::size_t>(v - inst_->domain(i).lo)];
  }

  const CspInstance* inst_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> cells_;
  Assignment values_;
  std::size_t eval_ = 0;
};

}  // namespace detail

/// One move decision from state `a`. With probability cfg.random_walk_prob the
/// move is uniform over all neighbours; otherwise it is uniform over the
/// lowest-evaluation neighbours, or over the next strictly higher tier when
/// `escape` reports stagnation (which also resets its counter).
template <class Rng>
Move best_move(const CspInstance& inst, const Assignment& a, Rng& rng, const SearchConfig& cfg, EscapeState& escape) {
  detail::ConflictTable table(inst);
  table.reset(a);
  return table.select(cfg, escape, rng).first;
}

template <class Rng>
Move best_move(const CspInstance& inst, const Assignment& a, Rng& rng, const SearchConfig& cfg = {}) {
  EscapeState escape(cfg.stagnation_limit);
  escape.reset(eval_global(inst, a));
  return best_move(inst, a, rng, cfg, escape);
}

/// Runs the search loop from a random state until a solution, budget
/// exhaustion, or a stop request. The stop token is polled once per step.
inline SearchOutcome gef_solve(const CspInstance& inst, const SearchConfig& cfg, std::stop_token stop = {}) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  std::mt19937_64 rng(cfg.seed);
  detail::ConflictTable table(inst);
  table.reset(random_state(inst, rng));
  EscapeState escape(cfg.stagnation_limit);
  escape.reset(table.eval());

  SearchOutcome out;
  std::size_t tries = 0;
  const bool movable = inst.neighbor_count() > 0;
  while (true) {
    if (table.eval().solved()) {
      out.status = SearchStatus::Solved;
      break;
    }
    if (stop.stop_requested()) {
      out.status = SearchStatus::Stopped;
      break;
    }
    if (!movable) {
      out.status = SearchStatus::Unsolved;
      break;
    }
    if (tries == cfg.max_tries) {
      if (cfg.max_restarts != 0 && out.stats.restarts == cfg.max_restarts) {
        out.status = SearchStatus::Unsolved;
        break;
      }
      ++out.stats.restarts;
      tries = 0;
      table.reset(random_state(inst, rng));
      escape.reset(table.eval());
      continue;
    }
    const auto [move, kind] = table.select(cfg, escape, rng);
    table.apply(move.var, move.new_value);
    escape.observe(table.eval());
    ++tries;
    ++out.stats.steps;
    if (kind == MoveKind::RandomWalk) ++out.stats.random_walk_steps;
    if (kind == MoveKind::Escape) ++out.stats.escape_steps;
  }
  out.assignment = table.values();
  out.stats.final_eval = table.eval();
  out.stats.wall_time = std::chrono::steady_clock::now() - started;
  return out;
}

}  // namespace gef
