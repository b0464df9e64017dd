#pragma once

// Chronological depth-first backtracking: variables in index order, values in
// ascending order, pruning on any inconsistency with an earlier variable.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>

#include "gef/csp.hpp"

namespace gef {

struct BacktrackResult {
  std::optional<Assignment> solution;
  std::uint64_t nodes = 0;  ///< partial assignments tried
};

namespace detail {

class Backtracker {
 public:
  explicit Backtracker(const CspInstance& inst) : inst_(inst), partial_(inst.size(), 0) {}

  // Calls visit(partial) on each complete consistent assignment; stops early
  // when visit returns false. Returns false iff stopped early.
  template <class Visit>
  bool run(std::size_t depth, Visit&& visit) {
    if (depth == inst_.size()) return visit(partial_);
    const auto& d = inst_.domain(depth);
    for (int v = d.lo; v <= d.hi; ++v) {
      ++nodes_;
      bool ok = true;
      for (std::size_t j = 0; j < depth && ok; ++j) ok = inst_.consistent(j, partial_[j], depth, v);
      if (!ok) continue;
      partial_[depth] = v;
      if (!run(depth + 1, visit)) return false;
    }
    return true;
  }

  std::uint64_t nodes() const { return nodes_; }

 private:
  const CspInstance& inst_;
  Assignment partial_;
  std::uint64_t nodes_ = 0;
};

}  // namespace detail

inline BacktrackResult backtrack_solve(const CspInstance& inst) {
  detail::Backtracker bt(inst);
  BacktrackResult result;
  bt.run(0, [&](const Assignment& a) {
    result.solution = a;
    return false;
  });
  result.nodes = bt.nodes();
  return result;
}

/// Number of solutions found by exhaustive search, capped at `limit`.
inline std::uint64_t count_solutions(const CspInstance& inst,
                                     std::uint64_t limit = std::numeric_limits<std::uint64_t>::max()) {
  detail::Backtracker bt(inst);
  std::uint64_t count = 0;
  if (limit == 0) return 0;
  bt.run(0, [&](const Assignment&) { return ++count < limit; });
  return count;
}

}  // namespace gef
