#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/linalg.hpp"

namespace cdisent::gaussmix {

/// Gaussian N(mean, cov). Covariance is stored densely (D*D) or, when
/// `diagonal`, as the D variances.
class ComponentGaussian {
 public:
  ComponentGaussian() = default;

  static ComponentGaussian dense(std::vector<double> mean, std::vector<double> cov) {
    ComponentGaussian g;
    g.mean_ = std::move(mean);
    g.cov_ = std::move(cov);
    g.diagonal_ = false;
    g.validate();
    return g;
  }

  static ComponentGaussian diag(std::vector<double> mean, std::vector<double> variances) {
    ComponentGaussian g;
    g.mean_ = std::move(mean);
    g.cov_ = std::move(variances);
    g.diagonal_ = true;
    g.validate();
    return g;
  }

  std::size_t dim() const noexcept { return mean_.size(); }
  bool is_diagonal() const noexcept { return diagonal_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  double mean(std::size_t i) const { return mean_.at(i); }

  double cov(std::size_t i, std::size_t j) const {
    if (diagonal_) return i == j ? cov_.at(i) : 0.0;
    return cov_.at(i * dim() + j);
  }

  linalg::Mat cov_matrix() const {
    linalg::Mat m(dim(), dim());
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) m(i, j) = cov(i, j);
    return m;
  }

  /// True when every off-diagonal covariance entry is exactly zero.
  bool effectively_diagonal() const {
    if (diagonal_) return true;
    for (std::size_t i = 0; i < dim(); ++i)
      for (std::size_t j = 0; j < dim(); ++j)
        if (i != j && cov(i, j) != 0.0) return false;
    return true;
  }

 private:
  void validate() const {
    const std::size_t d = mean_.size();
    if (d == 0) throw Error("ComponentGaussian: dimension must be >= 1");
    if (cov_.size() != (diagonal_ ? d : d * d))
      throw ShapeError("ComponentGaussian: covariance size does not match dimension " + std::to_string(d));
    for (double v : mean_)
      if (!std::isfinite(v)) throw NumericError("ComponentGaussian: non-finite mean");
    if (diagonal_) {
      for (double v : cov_)
        if (!(v >= -1e-10) || !std::isfinite(v)) throw NumericError("ComponentGaussian: negative variance");
      return;
    }
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j)
        if (std::abs(cov(i, j) - cov(j, i)) > 1e-10)
          throw NumericError("ComponentGaussian: covariance not symmetric at (" + std::to_string(i) + "," +
                             std::to_string(j) + ")");
    if (linalg::symmetric_eigenvalues(cov_matrix()).front() < -1e-10)
      throw NumericError("ComponentGaussian: covariance not positive semidefinite");
  }

  std::vector<double> mean_;
  std::vector<double> cov_;
  bool diagonal_ = false;
};

/// sum_c weight_c N(mu^c, Sigma^c).
class MixtureLatent {
 public:
  MixtureLatent(std::vector<ComponentGaussian> components, std::vector<double> weights)
      : components_(std::move(components)), weights_(std::move(weights)) {
    if (components_.empty()) throw Error("MixtureLatent: no components");
    if (weights_.size() != components_.size())
      throw ShapeError("MixtureLatent: one weight per component required");
    double s = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw Error("MixtureLatent: negative weight");
      s += w;
    }
    if (std::abs(s - 1.0) > 1e-9) throw Error("MixtureLatent: weights sum to " + std::to_string(s));
    for (const auto& c : components_)
      if (c.dim() != components_.front().dim()) throw ShapeError("MixtureLatent: components differ in dimension");
  }

  std::size_t size() const noexcept { return components_.size(); }
  std::size_t dim() const noexcept { return components_.front().dim(); }
  const ComponentGaussian& component(std::size_t c) const { return components_.at(c); }
  double weight(std::size_t c) const { return weights_.at(c); }
  const std::vector<double>& weights() const noexcept { return weights_; }

  /// E[Z_i] = sum_c pi_c mu^c_i
  double mean(std::size_t i) const {
    double m = 0.0;
    for (std::size_t c = 0; c < size(); ++c) m += weights_[c] * components_[c].mean(i);
    return m;
  }

 private:
  std::vector<ComponentGaussian> components_;
  std::vector<double> weights_;
};

/// Conditional of `g` over the unobserved indices (ascending) given
/// Z_observed = values:
///   mu_{k|j} = mu_k + S_kj S_jj^{-1} (z_j - mu_j),  S_{k|j} = S_kk - S_kj S_jj^{-1} S_jk.
inline ComponentGaussian conditional(const ComponentGaussian& g, const std::vector<std::size_t>& observed,
                                     const std::vector<double>& values) {
  const std::size_t d = g.dim();
  if (observed.size() != values.size()) throw ShapeError("conditional: one value per observed index required");
  std::set<std::size_t> obs(observed.begin(), observed.end());
  if (obs.size() != observed.size()) throw Error("conditional: repeated observed index");
  for (std::size_t j : observed)
    if (j >= d) throw ShapeError("conditional: observed index out of range");
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d; ++i)
    if (!obs.contains(i)) keep.push_back(i);
  if (keep.empty()) throw Error("conditional: every coordinate observed");

  const std::size_t nk = keep.size(), nj = observed.size();
  std::vector<double> mean(nk);
  for (std::size_t a = 0; a < nk; ++a) mean[a] = g.mean(keep[a]);
  if (nj == 0) {
    std::vector<double> cov(nk * nk);
    for (std::size_t a = 0; a < nk; ++a)
      for (std::size_t b = 0; b < nk; ++b) cov[a * nk + b] = g.cov(keep[a], keep[b]);
    return ComponentGaussian::dense(std::move(mean), std::move(cov));
  }

  if (g.is_diagonal()) {
    // S_kj = 0: conditioning leaves the kept block untouched.
    for (std::size_t j : observed)
      if (!(g.cov(j, j) > 1e-10))
        throw NumericError("conditional: singular observed block (variance of index " + std::to_string(j) + ")");
    std::vector<double> var(nk);
    for (std::size_t a = 0; a < nk; ++a) var[a] = g.cov(keep[a], keep[a]);
    return ComponentGaussian::diag(std::move(mean), std::move(var));
  }

  linalg::Mat sjj(nj, nj), sjk(nj, nk), resid(nj, 1);
  for (std::size_t a = 0; a < nj; ++a) {
    for (std::size_t b = 0; b < nj; ++b) sjj(a, b) = g.cov(observed[a], observed[b]);
    for (std::size_t b = 0; b < nk; ++b) sjk(a, b) = g.cov(observed[a], keep[b]);
    resid(a, 0) = values[a] - g.mean(observed[a]);
  }
  std::string block;
  for (std::size_t a = 0; a < nj; ++a) block += (a ? "," : "") + std::to_string(observed[a]);
  if (linalg::symmetric_eigenvalues(sjj).front() <= 1e-10)
    throw NumericError("conditional: observed block {" + block + "} is singular");
  auto l = linalg::cholesky(sjj);
  if (!l) throw NumericError("conditional: observed block {" + block + "} is not positive definite");
  const linalg::Mat w = linalg::cholesky_solve(*l, resid);  // S_jj^{-1}(z_j - mu_j)
  const linalg::Mat b = linalg::cholesky_solve(*l, sjk);    // S_jj^{-1} S_jk
  std::vector<double> cov(nk * nk);
  for (std::size_t a = 0; a < nk; ++a) {
    for (std::size_t r = 0; r < nj; ++r) mean[a] += sjk(r, a) * w(r, 0);
    for (std::size_t c = 0; c < nk; ++c) {
      double s = g.cov(keep[a], keep[c]);
      for (std::size_t r = 0; r < nj; ++r) s -= sjk(r, a) * b(r, c);
      cov[a * nk + c] = s;
    }
  }
  // Restore exact symmetry lost to rounding.
  for (std::size_t a = 0; a < nk; ++a)
    for (std::size_t c = a + 1; c < nk; ++c) cov[a * nk + c] = cov[c * nk + a] = 0.5 * (cov[a * nk + c] + cov[c * nk + a]);
  return ComponentGaussian::dense(std::move(mean), std::move(cov));
}

/// E[Z_i | Z_{-i} = z_minus_i] under a single component.
inline double conditional_mean(const ComponentGaussian& g, std::size_t i, const std::vector<double>& z_minus_i) {
  const std::size_t d = g.dim();
  if (i >= d) throw ShapeError("conditional_mean: index out of range");
  if (z_minus_i.size() + 1 != d) throw ShapeError("conditional_mean: need D-1 conditioning values");
  if (d == 1) return g.mean(0);
  std::vector<std::size_t> obs;
  for (std::size_t k = 0; k < d; ++k)
    if (k != i) obs.push_back(k);
  return conditional(g, obs, z_minus_i).mean(0);
}

/// KL( N(mu, diag(var)) || N(mu, I) ) = 1/2 [ -sum log var - D + sum var ].
inline double kl_unit_cov(const std::vector<double>& variances) {
  if (variances.empty()) throw Error("kl_unit_cov: empty variance vector");
  double s = 0.0;
  for (double v : variances) {
    if (!(v > 0.0)) throw NumericError("kl_unit_cov: variance must be positive, got " + std::to_string(v));
    s += -std::log(v) - 1.0 + v;
  }
  return 0.5 * s;
}

/// do^c first moment: sum_c pi_c E[Z_i | Z_{-i} = z_{-i}, component c].
inline double doc_moment(const MixtureLatent& m, std::size_t i, const std::vector<double>& z_minus_i) {
  double s = 0.0;
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (m.weight(c) == 0.0) continue;
    s += m.weight(c) * conditional_mean(m.component(c), i, z_minus_i);
  }
  return s;
}

/// Default evaluation points: each component mean shifted by +-1 std along each axis.
inline std::vector<std::vector<double>> default_eval_points(const MixtureLatent& m) {
  std::vector<std::vector<double>> pts;
  for (std::size_t c = 0; c < m.size(); ++c) {
    const auto& g = m.component(c);
    for (std::size_t d = 0; d < m.dim(); ++d)
      for (double sign : {-1.0, 1.0}) {
        auto p = g.mean();
        p[d] += sign * std::sqrt(std::max(g.cov(d, d), 0.0));
        pts.push_back(std::move(p));
      }
  }
  return pts;
}

enum class LcAggregate { Mean, Sup };

/// l_c = sum_i | E[Z_i | do^c(Z_{-i} = z_{-i})] - E[Z_i] |, averaged (or
/// maximized) over evaluation points.
inline double lc_moment(const MixtureLatent& m, const std::vector<std::vector<double>>& eval_points,
                        LcAggregate agg = LcAggregate::Mean) {
  if (eval_points.empty()) throw Error("lc_moment: no evaluation points");
  const std::size_t d = m.dim();
  double acc = 0.0;
  for (const auto& z : eval_points) {
    if (z.size() != d) throw ShapeError("lc_moment: evaluation point has wrong dimension");
    double l = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<double> rest;
      for (std::size_t k = 0; k < d; ++k)
        if (k != i) rest.push_back(z[k]);
      l += std::abs(doc_moment(m, i, rest) - m.mean(i));
    }
    acc = agg == LcAggregate::Mean ? acc + l : std::max(acc, l);
  }
  return agg == LcAggregate::Mean ? acc / static_cast<double>(eval_points.size()) : acc;
}

inline double lc_moment(const MixtureLatent& m, LcAggregate agg = LcAggregate::Mean) {
  return lc_moment(m, default_eval_points(m), agg);
}

/// log sum_c pi_c N(z; mu^c, Sigma^c), evaluated with log-sum-exp.
inline double mixture_logpdf(const MixtureLatent& m, const std::vector<double>& z) {
  const std::size_t d = m.dim();
  if (z.size() != d) throw ShapeError("mixture_logpdf: point has wrong dimension");
  std::vector<double> terms;
  for (std::size_t c = 0; c < m.size(); ++c) {
    if (m.weight(c) == 0.0) continue;
    const auto& g = m.component(c);
    auto l = linalg::cholesky(g.cov_matrix(), 0.0);
    if (!l) throw NumericError("mixture_logpdf: covariance of component " + std::to_string(c) + " is not positive definite");
    linalg::Mat r(d, 1);
    for (std::size_t k = 0; k < d; ++k) r(k, 0) = z[k] - g.mean(k);
    // Forward substitution: y = L^{-1} r, Mahalanobis = |y|^2.
    double maha = 0.0, logdet = 0.0;
    std::vector<double> y(d);
    for (std::size_t k = 0; k < d; ++k) {
      double s = r(k, 0);
      for (std::size_t q = 0; q < k; ++q) s -= (*l)(k, q) * y[q];
      y[k] = s / (*l)(k, k);
      maha += y[k] * y[k];
      logdet += 2.0 * std::log((*l)(k, k));
    }
    terms.push_back(std::log(m.weight(c)) - 0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi) + logdet + maha));
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

}  // namespace cdisent::gaussmix
