#pragma once

#include <algorithm>
#include <cstdint>

#include <json.hpp>

#include "cdisent/gaussmix/random_mixture.hpp"
#include "cdisent/scm/random_scm.hpp"
#include "cdisent/scm/scm.hpp"

namespace cdisent::harness {

/// Back-door adjustment over random confounded SCMs: the estimate with the
/// confounder set (and with a superset that adds a non-confounding root)
/// against the exact interventional distribution, and the gap left by the
/// empty set.
struct AdjustmentSuite {
  std::size_t models = 0;
  std::size_t superset_models = 0;
  double max_err_full = 0.0;
  double max_err_superset = 0.0;
  std::size_t empty_gap_hits = 0;  ///< models with empty-set gap > empty_gap_min
  double empty_gap_min = 0.01;
  double tolerance = 1e-12;
  double required_fraction = 0.9;

  double empty_gap_fraction() const {
    return models ? static_cast<double>(empty_gap_hits) / static_cast<double>(models) : 0.0;
  }
  bool ok() const {
    return models > 0 && max_err_full <= tolerance && max_err_superset <= tolerance &&
           empty_gap_fraction() >= required_fraction;
  }
};

inline AdjustmentSuite adjustment_suite(std::size_t n = 100, std::uint64_t seed = 0) {
  AdjustmentSuite r;
  const scm::RandomScmSpec spec;
  for (std::size_t i = 0; i < n; ++i) {
    const scm::DiscreteSCM s = scm::random_scm(spec, derive_seed(seed, i));
    const auto conf = s.with_role(scm::Role::Confounder);
    const auto fac = s.with_role(scm::Role::Factor);
    const std::size_t treat = fac[0], target = fac[1];
    r.max_err_full = std::max(r.max_err_full, scm::confounding_gap(s, target, treat, conf));
    const auto others = s.with_role(scm::Role::Other);
    if (!others.empty()) {
      auto sup = conf;
      sup.insert(sup.end(), others.begin(), others.end());
      r.max_err_superset = std::max(r.max_err_superset, scm::confounding_gap(s, target, treat, sup));
      ++r.superset_models;
    }
    if (scm::confounding_gap(s, target, treat, {}) > r.empty_gap_min) ++r.empty_gap_hits;
    ++r.models;
  }
  return r;
}

inline nlohmann::json to_json(const AdjustmentSuite& r) {
  return {{"models", r.models},
          {"superset_models", r.superset_models},
          {"max_err_full", r.max_err_full},
          {"max_err_superset", r.max_err_superset},
          {"empty_gap_fraction", r.empty_gap_fraction()},
          {"ok", r.ok()}};
}

/// l_c over random mixtures: zero for diagonal components, bounded away from
/// zero once a component carries a correlated pair.
struct LcSuite {
  std::size_t diagonal = 0;
  std::size_t correlated = 0;
  double max_diagonal = 0.0;
  double min_correlated = 0.0;
  double diagonal_bound = 1e-9;
  double correlated_bound = 1e-3;

  bool ok() const {
    return diagonal > 0 && correlated > 0 && max_diagonal <= diagonal_bound && min_correlated > correlated_bound;
  }
};

inline LcSuite lc_suite(std::size_t n = 200, std::uint64_t seed = 0) {
  LcSuite r;
  Rng diag_rng(derive_seed(seed, 0));
  for (std::size_t i = 0; i < n; ++i, ++r.diagonal)
    r.max_diagonal = std::max(r.max_diagonal, gaussmix::lc_moment(gaussmix::random_diag_mixture(diag_rng)));
  Rng corr_rng(derive_seed(seed, 1));
  r.min_correlated = 1e300;
  for (std::size_t i = 0; i < n; ++i, ++r.correlated)
    r.min_correlated = std::min(r.min_correlated, gaussmix::lc_moment(gaussmix::random_correlated_mixture(corr_rng)));
  return r;
}

inline nlohmann::json to_json(const LcSuite& r) {
  return {{"diagonal", r.diagonal},
          {"correlated", r.correlated},
          {"max_diagonal", r.max_diagonal},
          {"min_correlated", r.min_correlated},
          {"ok", r.ok()}};
}

}  // namespace cdisent::harness
