#pragma once

#include <set>
#include <utility>
#include <vector>

#include "cdisent/scm/scm.hpp"

namespace cdisent::scm {

/// Nodes reachable from `sources` along active trails given `observed`
/// (reachability / "Bayes-ball" on the DAG).
inline std::set<std::size_t> reachable(const DiscreteSCM& scm, const std::set<std::size_t>& sources,
                                       const std::set<std::size_t>& observed) {
  // Ancestors of the observed set (inclusive): colliders in here are open.
  std::set<std::size_t> anc;
  std::vector<std::size_t> stack(observed.begin(), observed.end());
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    if (!anc.insert(v).second) continue;
    for (std::size_t p : scm.parents(v)) stack.push_back(p);
  }

  enum Dir : int { Up = 0, Down = 1 };  // Up: arrived from a child
  std::set<std::pair<std::size_t, int>> visited;
  std::vector<std::pair<std::size_t, int>> todo;
  for (std::size_t s : sources) todo.emplace_back(s, Up);
  std::set<std::size_t> out;

  while (!todo.empty()) {
    auto [v, d] = todo.back();
    todo.pop_back();
    if (!visited.insert({v, d}).second) continue;
    const bool obs = observed.contains(v);
    if (!obs) out.insert(v);
    if (d == Up && !obs) {
      for (std::size_t p : scm.parents(v)) todo.emplace_back(p, Up);
      for (std::size_t c : scm.children(v)) todo.emplace_back(c, Down);
    } else if (d == Down) {
      if (!obs)
        for (std::size_t c : scm.children(v)) todo.emplace_back(c, Down);
      if (anc.contains(v))
        for (std::size_t p : scm.parents(v)) todo.emplace_back(p, Up);
    }
  }
  return out;
}

/// True iff every node of `a` is d-separated from every node of `b` given `given`.
inline bool d_separated(const DiscreteSCM& scm, const std::set<std::size_t>& a,
                        const std::set<std::size_t>& b, const std::set<std::size_t>& given) {
  const auto r = reachable(scm, a, given);
  for (std::size_t v : b)
    if (r.contains(v) && !given.contains(v)) return false;
  return true;
}

}  // namespace cdisent::scm
