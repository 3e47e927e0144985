#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cdisent/core/error.hpp"

namespace cdisent::scm {

inline constexpr std::size_t kMaxVariables = 8;
inline constexpr std::size_t kMaxStates = 6;
inline constexpr std::size_t kMaxJointCells = 1'000'000;
inline constexpr double kNormTolerance = 1e-12;

enum class Role { Confounder, Factor, Other };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::Confounder: return "confounder";
    case Role::Factor: return "factor";
    case Role::Other: return "other";
  }
  return "other";
}

inline Role parse_role(const std::string& s) {
  if (s == "confounder") return Role::Confounder;
  if (s == "factor") return Role::Factor;
  if (s == "other") return Role::Other;
  throw FormatError("unknown variable role '" + s + "'");
}

struct Variable {
  std::string name;
  std::size_t card = 2;
  Role role = Role::Other;

  friend bool operator==(const Variable&, const Variable&) = default;
};

/// Categorical structural causal model over at most 8 variables.
///
/// `cpt(v)` is stored row-major: one row per joint assignment of
/// `parents(v)` (first parent slowest), each row a distribution over v.
class DiscreteSCM {
 public:
  DiscreteSCM(std::vector<Variable> vars, std::vector<std::vector<std::size_t>> parents,
              std::vector<std::vector<double>> cpts)
      : vars_(std::move(vars)), parents_(std::move(parents)), cpts_(std::move(cpts)) {
    validate();
  }

  std::size_t size() const noexcept { return vars_.size(); }
  const Variable& var(std::size_t v) const { return vars_.at(v); }
  const std::vector<Variable>& variables() const noexcept { return vars_; }
  const std::vector<std::size_t>& parents(std::size_t v) const { return parents_.at(v); }
  const std::vector<double>& cpt(std::size_t v) const { return cpts_.at(v); }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].name == name) return i;
    throw Error("unknown variable '" + name + "'");
  }

  std::vector<std::size_t> with_role(Role r) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < vars_.size(); ++i)
      if (vars_[i].role == r) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> children(std::size_t v) const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < vars_.size(); ++c)
      if (std::find(parents_[c].begin(), parents_[c].end(), v) != parents_[c].end())
        out.push_back(c);
    return out;
  }

  std::size_t rows(std::size_t v) const {
    std::size_t r = 1;
    for (std::size_t p : parents_[v]) r *= vars_[p].card;
    return r;
  }

  /// Row index of the CPT of v for a full assignment of all variables.
  std::size_t row_index(std::size_t v, const std::vector<std::size_t>& assignment) const {
    std::size_t r = 0;
    for (std::size_t p : parents_[v]) r = r * vars_[p].card + assignment[p];
    return r;
  }

  double prob(std::size_t v, const std::vector<std::size_t>& assignment) const {
    return cpts_[v][row_index(v, assignment) * vars_[v].card + assignment[v]];
  }

  std::vector<std::size_t> topological_order() const {
    std::vector<std::size_t> order, indeg(vars_.size());
    for (std::size_t v = 0; v < vars_.size(); ++v) indeg[v] = parents_[v].size();
    std::vector<bool> done(vars_.size(), false);
    while (order.size() < vars_.size()) {
      bool progressed = false;
      for (std::size_t v = 0; v < vars_.size(); ++v) {
        if (done[v] || indeg[v] != 0) continue;
        done[v] = true;
        progressed = true;
        order.push_back(v);
        for (std::size_t c : children(v)) --indeg[c];
      }
      if (!progressed) throw Error("DiscreteSCM: graph contains a cycle");
    }
    return order;
  }

  std::set<std::size_t> descendants(std::size_t v) const {
    std::set<std::size_t> out;
    std::vector<std::size_t> stack{v};
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t c : children(u))
        if (out.insert(c).second) stack.push_back(c);
    }
    return out;
  }

  friend bool operator==(const DiscreteSCM&, const DiscreteSCM&) = default;

 private:
  void validate() const {
    const std::size_t n = vars_.size();
    if (n == 0) throw Error("DiscreteSCM: no variables");
    if (n > kMaxVariables)
      throw Error("DiscreteSCM: " + std::to_string(n) + " variables exceeds cap of " +
                  std::to_string(kMaxVariables));
    if (parents_.size() != n || cpts_.size() != n)
      throw Error("DiscreteSCM: parents/CPT lists must have one entry per variable");
    std::set<std::string> names;
    for (const auto& v : vars_) {
      if (v.card < 1 || v.card > kMaxStates)
        throw Error("DiscreteSCM: variable '" + v.name + "' cardinality " +
                    std::to_string(v.card) + " outside [1, " + std::to_string(kMaxStates) + "]");
      if (!names.insert(v.name).second)
        throw Error("DiscreteSCM: duplicate variable name '" + v.name + "'");
    }
    for (std::size_t v = 0; v < n; ++v) {
      std::set<std::size_t> seen;
      for (std::size_t p : parents_[v]) {
        if (p >= n || p == v) throw Error("DiscreteSCM: bad parent index for '" + vars_[v].name + "'");
        if (!seen.insert(p).second)
          throw Error("DiscreteSCM: repeated parent for '" + vars_[v].name + "'");
        if (vars_[v].role == Role::Factor && vars_[p].role == Role::Factor)
          throw Error("DiscreteSCM: factor '" + vars_[p].name + "' causes factor '" +
                      vars_[v].name + "'; factors must not cause each other");
        if (vars_[v].role == Role::Confounder && vars_[p].role == Role::Factor)
          throw Error("DiscreteSCM: confounder '" + vars_[v].name + "' has factor parent '" +
                      vars_[p].name + "'");
      }
    }
    (void)topological_order();
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t k = vars_[v].card, r = rows(v);
      if (cpts_[v].size() != r * k)
        throw Error("DiscreteSCM: CPT of '" + vars_[v].name + "' has " +
                    std::to_string(cpts_[v].size()) + " entries, expected " +
                    std::to_string(r * k));
      for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const double p = cpts_[v][i * k + j];
          if (!(p >= 0.0) || !std::isfinite(p))
            throw Error("DiscreteSCM: negative or non-finite entry in CPT of '" + vars_[v].name + "'");
          s += p;
        }
        if (std::abs(s - 1.0) > kNormTolerance)
          throw Error("DiscreteSCM: CPT row " + std::to_string(i) + " of '" + vars_[v].name +
                      "' sums to " + std::to_string(s));
      }
    }
  }

  std::vector<Variable> vars_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<double>> cpts_;
};

/// Dense probability table over `vars` (SCM indices), row-major with the
/// first variable slowest. The first `n_given` variables are conditioning
/// variables: every slice over the remaining ones sums to 1.
struct DistTable {
  std::vector<std::size_t> vars;
  std::vector<std::size_t> cards;
  std::vector<double> p;
  std::size_t n_given = 0;

  std::size_t slice_size() const {
    std::size_t s = 1;
    for (std::size_t i = n_given; i < cards.size(); ++i) s *= cards[i];
    return s;
  }

  std::size_t offset(const std::vector<std::size_t>& values) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < cards.size(); ++i) o = o * cards[i] + values[i];
    return o;
  }

  double at(const std::vector<std::size_t>& values) const { return p.at(offset(values)); }

  /// Largest |slice sum - 1| over all conditioning slices.
  double normalization_error() const {
    const std::size_t s = slice_size();
    double worst = 0.0;
    for (std::size_t b = 0; b < p.size(); b += s) {
      double t = 0.0;
      for (std::size_t i = 0; i < s; ++i) t += p[b + i];
      worst = std::max(worst, std::abs(t - 1.0));
    }
    return worst;
  }

  double max_abs_diff(const DistTable& other) const {
    if (cards != other.cards) throw Error("DistTable: comparing tables of different layout");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - other.p[i]));
    return worst;
  }
};

namespace detail {

/// Advance a mixed-radix counter; false once it wraps.
inline bool next_assignment(std::vector<std::size_t>& a, const std::vector<std::size_t>& cards) {
  for (std::size_t i = a.size(); i-- > 0;) {
    if (++a[i] < cards[i]) return true;
    a[i] = 0;
  }
  return false;
}

inline std::size_t position(const std::vector<std::size_t>& vars, std::size_t v) {
  auto it = std::find(vars.begin(), vars.end(), v);
  if (it == vars.end()) throw Error("DistTable: variable " + std::to_string(v) + " not in table");
  return static_cast<std::size_t>(it - vars.begin());
}

}  // namespace detail

/// Exact joint distribution by chain-rule product.
inline DistTable joint(const DiscreteSCM& scm) {
  DistTable t;
  std::size_t cells = 1;
  for (std::size_t v = 0; v < scm.size(); ++v) {
    t.vars.push_back(v);
    t.cards.push_back(scm.var(v).card);
    cells *= scm.var(v).card;
    if (cells > kMaxJointCells)
      throw Error("joint: table would exceed " + std::to_string(kMaxJointCells) + " cells");
  }
  t.p.resize(cells);
  std::vector<std::size_t> a(scm.size(), 0);
  std::size_t i = 0;
  do {
    double pr = 1.0;
    for (std::size_t v = 0; v < scm.size() && pr > 0.0; ++v) pr *= scm.prob(v, a);
    t.p[i++] = pr;
  } while (detail::next_assignment(a, t.cards));
  return t;
}

/// Marginal over `keep` (in the given order) of an unconditioned table.
inline DistTable marginal(const DistTable& t, const std::vector<std::size_t>& keep) {
  if (t.n_given != 0) throw Error("marginal: table is conditional");
  DistTable m;
  m.vars = keep;
  std::vector<std::size_t> pos;
  for (std::size_t v : keep) {
    pos.push_back(detail::position(t.vars, v));
    m.cards.push_back(t.cards[pos.back()]);
  }
  std::size_t cells = 1;
  for (std::size_t c : m.cards) cells *= c;
  m.p.assign(cells, 0.0);
  std::vector<std::size_t> a(t.vars.size(), 0), sub(keep.size());
  std::size_t i = 0;
  do {
    for (std::size_t k = 0; k < pos.size(); ++k) sub[k] = a[pos[k]];
    m.p[m.offset(sub)] += t.p[i++];
  } while (detail::next_assignment(a, t.cards));
  return m;
}

enum class ZeroCellPolicy { Error, SkipAndRenormalize };

/// A conditioning cell with positive P(adjust=c) but zero P(treatment, c).
struct SkippedCell {
  std::size_t treatment_value;
  std::vector<std::size_t> adjust_values;
};

struct Adjustment {
  DistTable table;  ///< vars = {treatment, target}, n_given = 1
  std::vector<SkippedCell> skipped;
};

/// Back-door adjustment: P(target | do(treatment=t)) estimated as
/// sum_c P(target | t, c) P(c) from an observational joint.
inline Adjustment adjustment_estimate(const DistTable& joint_table, std::size_t target,
                                      std::size_t treatment,
                                      const std::vector<std::size_t>& adjust,
                                      ZeroCellPolicy policy = ZeroCellPolicy::Error) {
  if (target == treatment) throw Error("adjustment_estimate: target equals treatment");
  for (std::size_t c : adjust)
    if (c == target || c == treatment)
      throw Error("adjustment_estimate: adjustment set must be disjoint from target/treatment");

  std::vector<std::size_t> order{treatment, target};
  order.insert(order.end(), adjust.begin(), adjust.end());
  const DistTable m = marginal(joint_table, order);  // P(t, y, c)
  const std::size_t kt = m.cards[0], ky = m.cards[1];
  std::size_t kc = 1;
  for (std::size_t i = 2; i < m.cards.size(); ++i) kc *= m.cards[i];

  // P(c) and P(t, c)
  std::vector<double> pc(kc, 0.0), ptc(kt * kc, 0.0);
  for (std::size_t t = 0; t < kt; ++t)
    for (std::size_t y = 0; y < ky; ++y)
      for (std::size_t c = 0; c < kc; ++c) {
        const double v = m.p[(t * ky + y) * kc + c];
        pc[c] += v;
        ptc[t * kc + c] += v;
      }

  Adjustment out;
  out.table.vars = {treatment, target};
  out.table.cards = {kt, ky};
  out.table.n_given = 1;
  out.table.p.assign(kt * ky, 0.0);

  std::vector<std::size_t> adjust_cards(m.cards.begin() + 2, m.cards.end());
  auto decode = [&](std::size_t c) {
    std::vector<std::size_t> vals(adjust_cards.size());
    for (std::size_t i = adjust_cards.size(); i-- > 0;) {
      vals[i] = c % adjust_cards[i];
      c /= adjust_cards[i];
    }
    return vals;
  };

  for (std::size_t t = 0; t < kt; ++t) {
    double mass = 0.0;
    for (std::size_t c = 0; c < kc; ++c) {
      if (pc[c] <= 0.0) continue;
      if (ptc[t * kc + c] <= 0.0) {
        if (policy == ZeroCellPolicy::Error) {
          std::string cell = "treatment=" + std::to_string(t) + ", adjust=(";
          auto vals = decode(c);
          for (std::size_t i = 0; i < vals.size(); ++i) cell += (i ? "," : "") + std::to_string(vals[i]);
          throw Error("adjustment_estimate: empty conditioning cell " + cell + ")");
        }
        out.skipped.push_back({t, decode(c)});
        continue;
      }
      mass += pc[c];
      for (std::size_t y = 0; y < ky; ++y)
        out.table.p[t * ky + y] += m.p[(t * ky + y) * kc + c] / ptc[t * kc + c] * pc[c];
    }
    if (mass <= 0.0) throw Error("adjustment_estimate: no supported cell for treatment=" + std::to_string(t));
    if (!out.skipped.empty())
      for (std::size_t y = 0; y < ky; ++y) out.table.p[t * ky + y] /= mass;
  }
  return out;
}

/// Plain observational conditional P(target | given...) as a table with the
/// given variables first. Zero-probability conditioning cells raise.
inline DistTable conditional(const DistTable& joint_table, std::size_t target,
                             const std::vector<std::size_t>& given) {
  std::vector<std::size_t> order = given;
  order.push_back(target);
  DistTable m = marginal(joint_table, order);
  m.n_given = given.size();
  const std::size_t k = m.cards.back();
  for (std::size_t b = 0; b < m.p.size(); b += k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += m.p[b + j];
    if (s <= 0.0) throw Error("conditional: zero-probability conditioning cell at offset " + std::to_string(b / k));
    for (std::size_t j = 0; j < k; ++j) m.p[b + j] /= s;
  }
  return m;
}

/// Graph surgery: intervened variables lose their parents and get a point
/// mass CPT; everything else is unchanged.
inline DiscreteSCM intervene(const DiscreteSCM& scm, const std::map<std::string, std::size_t>& assignments) {
  std::vector<Variable> vars = scm.variables();
  std::vector<std::vector<std::size_t>> parents;
  std::vector<std::vector<double>> cpts;
  for (std::size_t v = 0; v < scm.size(); ++v) {
    parents.push_back(scm.parents(v));
    cpts.push_back(scm.cpt(v));
  }
  for (const auto& [name, value] : assignments) {
    const std::size_t v = scm.index_of(name);
    if (value >= vars[v].card)
      throw Error("intervene: value " + std::to_string(value) + " out of range for '" + name + "'");
    parents[v].clear();
    cpts[v].assign(vars[v].card, 0.0);
    cpts[v][value] = 1.0;
  }
  return DiscreteSCM(std::move(vars), std::move(parents), std::move(cpts));
}

/// Exact P(target | do(do_map)) by truncated factorization.
inline DistTable interventional_dist(const DiscreteSCM& scm, const std::string& target,
                                     const std::map<std::string, std::size_t>& do_map) {
  const std::size_t t = scm.index_of(target);
  return marginal(joint(intervene(scm, do_map)), {t});
}

/// Members of `adjust` that are descendants of `treatment`: these void the
/// identification guarantee of back-door adjustment.
inline std::vector<std::size_t> adjustment_violations(const DiscreteSCM& scm, std::size_t treatment,
                                                      const std::vector<std::size_t>& adjust) {
  const auto desc = scm.descendants(treatment);
  std::vector<std::size_t> out;
  for (std::size_t c : adjust)
    if (desc.contains(c)) out.push_back(c);
  return out;
}

/// max over treatment/target values of |adjustment - interventional|.
inline double confounding_gap(const DiscreteSCM& scm, std::size_t target, std::size_t treatment,
                              const std::vector<std::size_t>& adjust,
                              ZeroCellPolicy policy = ZeroCellPolicy::Error) {
  const Adjustment adj = adjustment_estimate(joint(scm), target, treatment, adjust, policy);
  const std::size_t kt = scm.var(treatment).card, ky = scm.var(target).card;
  double gap = 0.0;
  for (std::size_t t = 0; t < kt; ++t) {
    const DistTable truth = interventional_dist(scm, scm.var(target).name, {{scm.var(treatment).name, t}});
    for (std::size_t y = 0; y < ky; ++y)
      gap = std::max(gap, std::abs(adj.table.p[t * ky + y] - truth.p[y]));
  }
  return gap;
}

}  // namespace cdisent::scm
