#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/linalg.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/core/stats.hpp"

namespace cdisent::metrics {

struct IossSettings {
  std::size_t resolution = 10;
  double quantile = 0.01;
  std::size_t max_full_dims = 6;  ///< above this, random pairs are sampled
  std::size_t random_pairs = 15;
  std::uint64_t seed = 0;
};

/// Coordinate pairs scored by ioss: all pairs up to max_full_dims, otherwise
/// distinct random pairs drawn from `seed`.
inline std::vector<std::pair<std::size_t, std::size_t>> ioss_pairs(std::size_t d, const IossSettings& s = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) all.emplace_back(a, b);
  if (d <= s.max_full_dims || all.size() <= s.random_pairs) return all;
  Rng rng(derive_seed(s.seed, 0x10));
  rng.shuffle(all.begin(), all.end());
  all.resize(s.random_pairs);
  std::sort(all.begin(), all.end());
  return all;
}

/// 1 - mean over pairs of the fraction of R x R cells of the [q01, q99]
/// product support that hold at least one sample. Cell positions use
/// (z - q01) / (q99 - q01), which is what per-dimension standardization
/// followed by the same quantiles yields.
inline double ioss(const linalg::Mat& z, const IossSettings& s = {}) {
  const std::size_t n = z.rows, d = z.cols;
  if (n < 100) throw Error("ioss: need at least 100 samples, got " + std::to_string(n));
  if (d < 2) throw Error("ioss: need at least two latent dimensions");
  if (s.resolution < 1) throw Error("ioss: resolution must be >= 1");
  const std::size_t r = s.resolution;
  std::vector<std::pair<double, double>> bounds(d);
  std::vector<double> col(n);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      col[k] = z(k, i);
      if (!std::isfinite(col[k])) throw NumericError("ioss: non-finite latent value");
    }
    bounds[i] = stats::quantile_bounds(col, s.quantile);
    if (!(bounds[i].second > bounds[i].first))
      throw Error("ioss: latent dimension " + std::to_string(i) + " has zero support range");
  }
  auto cell = [&](std::size_t row, std::size_t i) -> long {
    const auto [lo, hi] = bounds[i];
    const double v = z(row, i);
    if (v < lo || v > hi) return -1;
    const auto c = static_cast<long>(std::floor((v - lo) / (hi - lo) * static_cast<double>(r)));
    return std::min<long>(c, static_cast<long>(r) - 1);
  };
  const auto pairs = ioss_pairs(d, s);
  double empty = 0.0;
  std::vector<char> hit(r * r);
  for (const auto& [a, b] : pairs) {
    std::fill(hit.begin(), hit.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      const long ca = cell(k, a), cb = cell(k, b);
      if (ca >= 0 && cb >= 0) hit[static_cast<std::size_t>(ca) * r + static_cast<std::size_t>(cb)] = 1;
    }
    std::size_t occupied = 0;
    for (char h : hit) occupied += h ? 1 : 0;
    empty += 1.0 - static_cast<double>(occupied) / static_cast<double>(r * r);
  }
  return empty / static_cast<double>(pairs.size());
}

}  // namespace cdisent::metrics
