#pragma once

#include <cmath>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/linalg.hpp"
#include "cdisent/datagen/dataset.hpp"

namespace cdisent::metrics {

inline constexpr double kRidgeLambda = 1e-2;

/// D from a K x D importance matrix: sum_i rho_i (1 - H(P_i) / log K).
inline double dci_from_importance(const linalg::Mat& r) {
  const std::size_t k = r.rows, d = r.cols;
  if (k < 2) throw Error("dci_d: need at least two factors");
  double total = 0.0;
  for (double v : r.a) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("dci_d: importances must be finite and >= 0");
    total += v;
  }
  if (total <= 0.0) return 0.0;
  double out = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double col = 0.0;
    for (std::size_t f = 0; f < k; ++f) col += r(f, i);
    if (col <= 0.0) continue;
    double h = 0.0;
    for (std::size_t f = 0; f < k; ++f) {
      const double p = r(f, i) / col;
      if (p > 0.0) h -= p * std::log(p);
    }
    out += (col / total) * (1.0 - h / std::log(static_cast<double>(k)));
  }
  return out;
}

/// |weights| of ridge regressions (lambda on the mean-scaled Gram matrix) of
/// class indicators on standardized Z; one-vs-rest per class, summed per
/// factor. Binary factors use a single indicator.
inline linalg::Mat dci_importance(const linalg::Mat& z, const std::vector<std::vector<std::uint16_t>>& factors,
                                  const std::vector<std::size_t>& cards, double lambda = kRidgeLambda) {
  const std::size_t n = z.rows, d = z.cols;
  if (factors.size() != cards.size()) throw ShapeError("dci_d: factor columns and cards differ");
  linalg::Mat zs(n, d);
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0, ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) m += z(r, i);
    m /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) ss += (z(r, i) - m) * (z(r, i) - m);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    for (std::size_t r = 0; r < n; ++r) zs(r, i) = sd > 0.0 ? (z(r, i) - m) / sd : 0.0;
  }
  linalg::Mat gram = linalg::multiply(linalg::transpose(zs), zs);
  for (double& v : gram.a) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i) gram(i, i) += lambda;
  const auto l = linalg::cholesky(gram);
  if (!l) throw NumericError("dci_d: ridge system not positive definite");

  linalg::Mat imp(factors.size(), d);
  for (std::size_t f = 0; f < factors.size(); ++f) {
    if (factors[f].size() != n) throw ShapeError("dci_d: factor column length differs from latent rows");
    const std::size_t classes = cards[f] == 2 ? 1 : cards[f];
    linalg::Mat rhs(d, classes);
    for (std::size_t cl = 0; cl < classes; ++cl) {
      const std::size_t target = cards[f] == 2 ? 1 : cl;
      double ybar = 0.0;
      for (std::size_t r = 0; r < n; ++r) ybar += factors[f][r] == target ? 1.0 : 0.0;
      ybar /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double y = (factors[f][r] == target ? 1.0 : 0.0) - ybar;
        for (std::size_t i = 0; i < d; ++i) rhs(i, cl) += zs(r, i) * y / static_cast<double>(n);
      }
    }
    const linalg::Mat w = linalg::cholesky_solve(*l, rhs);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t cl = 0; cl < classes; ++cl) imp(f, i) += std::abs(w(i, cl));
  }
  return imp;
}

inline double dci_d(const linalg::Mat& z, const datagen::LabeledDataset& ds, double lambda = kRidgeLambda) {
  if (z.rows != ds.size()) throw ShapeError("dci_d: latent rows differ from dataset size");
  if (z.rows < 500) throw Error("dci_d: need at least 500 samples, got " + std::to_string(z.rows));
  std::vector<std::vector<std::uint16_t>> cols;
  for (std::size_t k = 0; k < ds.n_factors(); ++k) cols.push_back(ds.factor_column(k));
  return dci_from_importance(dci_importance(z, cols, ds.factor_cards, lambda));
}

}  // namespace cdisent::metrics
