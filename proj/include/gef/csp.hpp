#pragma once

// Finite discrete binary constraint satisfaction problems and the N-queens
// instance used throughout the library.
//
// Values are 1-based integers taken from contiguous domains [lo, hi].
// Variables are addressed by 0-based index.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gef {

class InvalidInstance : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MalformedAssignment : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Domain {
  int lo = 1;
  int hi = 1;

  std::size_t size() const { return static_cast<std::size_t>(hi - lo + 1); }
  bool contains(int v) const { return v >= lo && v <= hi; }
};

/// Binary consistency predicate: consistent(i, a, j, b) for i != j.
using Relation = std::function<bool(std::size_t, int, std::size_t, int)>;

/// Extensional constraint store: for each constrained pair (i < j) the set of
/// mutually consistent value tuples. Pairs with no entry are unconstrained.
class TupleTable {
 public:
  void allow(std::size_t i, int a, std::size_t j, int b) {
    if (i == j) throw InvalidInstance("constraint must relate two distinct variables");
    if (i < j)
      table_[{i, j}].insert({a, b});
    else
      table_[{j, i}].insert({b, a});
  }

  /// Declares (i, j) constrained even if no tuple is ever allowed.
  void constrain(std::size_t i, std::size_t j) {
    if (i == j) throw InvalidInstance("constraint must relate two distinct variables");
    table_[{std::min(i, j), std::max(i, j)}];
  }

  bool consistent(std::size_t i, int a, std::size_t j, int b) const {
    if (i > j) {
      std::swap(i, j);
      std::swap(a, b);
    }
    auto it = table_.find({i, j});
    if (it == table_.end()) return true;
    return it->second.contains({a, b});
  }

 private:
  std::map<std::pair<std::size_t, std::size_t>, std::set<std::pair<int, int>>> table_;
};

class CspInstance {
 public:
  CspInstance(std::string name, std::vector<Domain> domains, Relation relation)
      : name_(std::move(name)), domains_(std::move(domains)), relation_(std::move(relation)) {
    if (domains_.empty()) throw InvalidInstance("instance needs at least one variable");
    for (const auto& d : domains_)
      if (d.hi < d.lo) throw InvalidInstance("empty domain");
    if (!relation_) throw InvalidInstance("missing constraint relation");
  }

  CspInstance(std::string name, std::vector<Domain> domains, TupleTable table)
      : CspInstance(std::move(name), std::move(domains),
                    [t = std::make_shared<const TupleTable>(std::move(table))](
                        std::size_t i, int a, std::size_t j, int b) { return t->consistent(i, a, j, b); }) {}

  const std::string& name() const { return name_; }
  std::size_t size() const { return domains_.size(); }
  const std::vector<Domain>& domains() const { return domains_; }
  const Domain& domain(std::size_t i) const { return domains_[i]; }

  bool consistent(std::size_t i, int a, std::size_t j, int b) const { return relation_(i, a, j, b); }

  /// Σ_i (|D_i| - 1): the number of single-variable neighbours of any state.
  std::size_t neighbor_count() const {
    std::size_t total = 0;
    for (const auto& d : domains_) total += d.size() - 1;
    return total;
  }

 private:
  std::string name_;
  std::vector<Domain> domains_;
  Relation relation_;
};

using Assignment = std::vector<int>;

/// Rows i != j are consistent iff the queens differ in column and diagonal.
inline bool queens_consistent(std::size_t i, int a, std::size_t j, int b) {
  const auto row_gap = i > j ? static_cast<long>(i - j) : static_cast<long>(j - i);
  const long col_gap = a > b ? static_cast<long>(a) - b : static_cast<long>(b) - a;
  return a != b && row_gap != col_gap;
}

/// N-queens: variable i is the column (1..n) of the queen in row i.
inline CspInstance make_nqueens(std::size_t n) {
  if (n == 0) throw InvalidInstance("n-queens requires n >= 1");
  return CspInstance(std::to_string(n) + "-queens",
                     std::vector<Domain>(n, Domain{1, static_cast<int>(n)}), &queens_consistent);
}

inline void check_assignment(const CspInstance& inst, const Assignment& a) {
  if (a.size() != inst.size())
    throw MalformedAssignment("assignment has " + std::to_string(a.size()) + " values, instance has " +
                              std::to_string(inst.size()) + " variables");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!inst.domain(i).contains(a[i]))
      throw MalformedAssignment("value " + std::to_string(a[i]) + " outside domain of variable " +
                                std::to_string(i));
}

/// True iff every distinct pair of variables is consistent.
inline bool validate_solution(const CspInstance& inst, const Assignment& a) {
  check_assignment(inst, a);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j)
      if (!inst.consistent(i, a[i], j, a[j])) return false;
  return true;
}

template <class Rng>
Assignment random_state(const CspInstance& inst, Rng& rng) {
  Assignment a(inst.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& d = inst.domain(i);
    a[i] = std::uniform_int_distribution<int>(d.lo, d.hi)(rng);
  }
  return a;
}

inline std::string format_assignment(const Assignment& a) {
  std::string out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(a[i]);
  }
  return out;
}

inline Assignment parse_assignment(std::string_view text) {
  Assignment a;
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r' || text.back() == ' ')) text.remove_suffix(1);
  if (text.empty()) return a;
  std::size_t pos = 0;
  while (true) {
    const auto comma = text.find(',', pos);
    const auto field = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    int v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size())
      throw MalformedAssignment("bad assignment field '" + std::string(field) + "'");
    a.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return a;
}

}  // namespace gef
