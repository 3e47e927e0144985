#pragma once

#include <vector>

#include "cdisent/core/random.hpp"
#include "cdisent/gaussmix/gaussmix.hpp"

namespace cdisent::gaussmix {

inline std::vector<double> random_mean(Rng& rng, std::size_t d) {
  std::vector<double> m(d);
  for (auto& v : m) v = rng.uniform(-2, 2);
  return m;
}

/// Positive weights summing to one, each at least floor / (k (floor + 1)).
inline std::vector<double> random_weights(Rng& rng, std::size_t k, double floor) {
  std::vector<double> w(k);
  double s = 0.0;
  for (auto& v : w) s += (v = floor + rng.uniform());
  for (auto& v : w) v /= s;
  return w;
}

inline ComponentGaussian random_diag(Rng& rng, std::size_t d) {
  std::vector<double> var(d);
  for (auto& v : var) v = rng.uniform(0.3, 3.0);
  return ComponentGaussian::diag(random_mean(rng, d), var);
}

/// Diagonal component except for one correlated pair with |rho| in [0.2, 0.8].
inline ComponentGaussian random_correlated(Rng& rng, std::size_t d) {
  std::vector<double> sd(d);
  for (auto& v : sd) v = rng.uniform(0.5, 2.0);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = sd[i] * sd[i];
  const std::size_t i = rng.below(d);
  std::size_t j = rng.below(d - 1);
  if (j >= i) ++j;
  const double rho = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 0.8);
  cov[i * d + j] = cov[j * d + i] = rho * sd[i] * sd[j];
  return ComponentGaussian::dense(random_mean(rng, d), cov);
}

/// 1-4 diagonal components in 2-8 dimensions.
inline MixtureLatent random_diag_mixture(Rng& rng) {
  const std::size_t d = 2 + rng.below(7), k = 1 + rng.below(4);
  std::vector<ComponentGaussian> comps;
  for (std::size_t c = 0; c < k; ++c) comps.push_back(random_diag(rng, d));
  return MixtureLatent(comps, random_weights(rng, k, 0.0));
}

/// Like random_diag_mixture, but component 0 carries a correlated pair and
/// every weight is bounded away from zero.
inline MixtureLatent random_correlated_mixture(Rng& rng) {
  const std::size_t d = 2 + rng.below(7), k = 1 + rng.below(4);
  std::vector<ComponentGaussian> comps;
  comps.push_back(random_correlated(rng, d));
  for (std::size_t c = 1; c < k; ++c) comps.push_back(random_diag(rng, d));
  return MixtureLatent(comps, random_weights(rng, k, 0.2));
}

}  // namespace cdisent::gaussmix
