#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cdisent/core/random.hpp"
#include "cdisent/scm/scm.hpp"

namespace cdisent::scm {

struct RandomScmSpec {
  std::size_t max_vars = 4;
  std::size_t min_states = 2;
  std::size_t max_states = 3;
  std::size_t max_confounders = 2;
  double min_strength = 0.2;  ///< min TV between child rows across confounder values
  bool allow_other = true;    ///< may add a non-confounding root label
};

inline double total_variation(const double* a, const double* b, std::size_t k) {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

/// Smallest TV distance between rows of `child`'s CPT whose parent
/// assignments differ only in the value of one confounder parent.
inline double confounder_strength(const DiscreteSCM& scm, std::size_t child) {
  const auto& ps = scm.parents(child);
  std::vector<std::size_t> cards;
  for (std::size_t p : ps) cards.push_back(scm.var(p).card);
  const std::size_t k = scm.var(child).card;
  const auto& cpt = scm.cpt(child);
  auto row_of = [&](const std::vector<std::size_t>& a) {
    std::size_t r = 0;
    for (std::size_t i = 0; i < a.size(); ++i) r = r * cards[i] + a[i];
    return r;
  };
  double worst = 1.0;
  bool any = false;
  std::vector<std::size_t> a(ps.size(), 0);
  if (ps.empty()) return 0.0;
  do {
    for (std::size_t j = 0; j < ps.size(); ++j) {
      if (scm.var(ps[j]).role != Role::Confounder) continue;
      for (std::size_t alt = a[j] + 1; alt < cards[j]; ++alt) {
        auto b = a;
        b[j] = alt;
        worst = std::min(worst, total_variation(&cpt[row_of(a) * k], &cpt[row_of(b) * k], k));
        any = true;
      }
    }
  } while (detail::next_assignment(a, cards));
  return any ? worst : 0.0;
}

namespace detail {

inline std::vector<double> random_row(Rng& rng, std::size_t k) {
  std::vector<double> row(k);
  rng.simplex(row);
  // Sharpen toward a random state so distinct rows separate easily.
  const std::size_t peak = rng.below(k);
  for (std::size_t i = 0; i < k; ++i) row[i] = 0.4 * row[i] + (i == peak ? 0.6 : 0.0);
  return row;
}

/// Rows are drawn greedily; each must keep TV >= strength with earlier rows
/// that differ in exactly one confounder value.
inline bool fill_cpt(Rng& rng, std::vector<double>& cpt, const std::vector<std::size_t>& cards,
                     const std::vector<bool>& is_conf, std::size_t k, double strength) {
  std::size_t rows = 1;
  for (std::size_t c : cards) rows *= c;
  cpt.assign(rows * k, 0.0);
  std::vector<std::size_t> a(cards.size(), 0);
  std::size_t r = 0;
  do {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      auto row = random_row(rng, k);
      bool ok = true;
      for (std::size_t j = 0; j < cards.size() && ok; ++j) {
        if (!is_conf[j]) continue;
        for (std::size_t alt = 0; alt < a[j] && ok; ++alt) {
          auto b = a;
          b[j] = alt;
          std::size_t rb = 0;
          for (std::size_t i = 0; i < b.size(); ++i) rb = rb * cards[i] + b[i];
          ok = total_variation(row.data(), &cpt[rb * k], k) >= strength;
        }
      }
      if (ok) {
        std::copy(row.begin(), row.end(), cpt.begin() + static_cast<long>(r * k));
        placed = true;
      }
    }
    if (!placed) return false;
    ++r;
  } while (next_assignment(a, cards));
  return true;
}

}  // namespace detail

/// Random member of the confounded graph class used for adjustment tests:
/// confounders (roots) -> factors, optional "other" root feeding one factor.
/// Variable order: confounders, other, factors. Every confounder is a parent
/// of the first two factors.
inline DiscreteSCM random_scm(const RandomScmSpec& spec, std::uint64_t seed) {
  if (spec.max_vars < 3 || spec.max_vars > kMaxVariables)
    throw Error("random_scm: max_vars must be in [3, " + std::to_string(kMaxVariables) + "]");
  if (spec.min_states < 2 || spec.max_states > kMaxStates || spec.min_states > spec.max_states)
    throw Error("random_scm: invalid state bounds");
  if (spec.min_strength < 0.0 || spec.min_strength > 0.6)
    throw Error("random_scm: min_strength must lie in [0, 0.6]");

  Rng rng(derive_seed(seed, 0x5c3));
  const std::size_t max_conf = std::max<std::size_t>(1, std::min(spec.max_confounders, spec.max_vars - 2));
  const std::size_t n_conf = 1 + rng.below(max_conf);
  const std::size_t room = spec.max_vars - n_conf;
  const std::size_t n_other = (spec.allow_other && room >= 3 && rng.uniform() < 0.5) ? 1 : 0;
  const std::size_t n_fact = 2 + rng.below(room - n_other - 1);

  auto states = [&] { return spec.min_states + rng.below(spec.max_states - spec.min_states + 1); };

  std::vector<Variable> vars;
  for (std::size_t i = 0; i < n_conf; ++i) vars.push_back({"C" + std::to_string(i), states(), Role::Confounder});
  for (std::size_t i = 0; i < n_other; ++i) vars.push_back({"W" + std::to_string(i), states(), Role::Other});
  for (std::size_t i = 0; i < n_fact; ++i) vars.push_back({"Z" + std::to_string(i + 1), states(), Role::Factor});

  const std::size_t n = vars.size();
  std::vector<std::vector<std::size_t>> parents(n);
  const std::size_t first_factor = n_conf + n_other;
  for (std::size_t f = first_factor; f < n; ++f) {
    if (f < first_factor + 2) {
      for (std::size_t c = 0; c < n_conf; ++c) parents[f].push_back(c);
    } else {
      for (std::size_t c = 0; c < n_conf; ++c)
        if (rng.uniform() < 0.6) parents[f].push_back(c);
      if (parents[f].empty()) parents[f].push_back(rng.below(n_conf));
    }
  }
  if (n_other == 1) parents[first_factor + rng.below(n_fact)].push_back(n_conf);

  for (int restart = 0;; ++restart) {
    std::vector<std::vector<double>> cpts(n);
    bool ok = true;
    for (std::size_t v = 0; v < n && ok; ++v) {
      const std::size_t k = vars[v].card;
      if (parents[v].empty()) {
        // Roots: mix a random simplex with uniform so no state is rare.
        std::vector<double> row(k);
        rng.simplex(row);
        for (auto& x : row) x = 0.5 * x + 0.5 / static_cast<double>(k);
        cpts[v] = row;
        continue;
      }
      std::vector<std::size_t> cards;
      std::vector<bool> is_conf;
      for (std::size_t p : parents[v]) {
        cards.push_back(vars[p].card);
        is_conf.push_back(vars[p].role == Role::Confounder);
      }
      ok = detail::fill_cpt(rng, cpts[v], cards, is_conf, k, spec.min_strength);
    }
    if (ok) return DiscreteSCM(vars, parents, cpts);
    if (restart > 1000) throw Error("random_scm: could not satisfy strength bound");
  }
}

}  // namespace cdisent::scm
