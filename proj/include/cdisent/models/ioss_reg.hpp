#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/graph.hpp"

namespace cdisent::models {

inline constexpr std::size_t kIossMinBatch = 32;

/// Grid resolution per axis for a batch of n: clamp(floor(sqrt(n / 8)), 2, 10),
/// about eight samples per cell when the support is a full product.
inline std::size_t ioss_resolution(std::size_t n) {
  const auto r = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n) / 8.0)));
  return std::clamp<std::size_t>(r, 2, 10);
}

/// Differentiable surrogate of the support-independence score on a batch of
/// latents z [n, D]. Each dimension is standardized over the batch; its
/// support [q01, q99] (order statistics, selected by constant masks so the
/// bounds stay differentiable) is split into R cells with sigmoid edges. For
/// every pair of dimensions the value is the mean probability, over the
/// R x R product cells, that no sample falls in the cell:
///   empty(cell) = prod_n (1 - w_n(cell)),  w = soft membership.
/// Edge slopes are `sharpness` per cell width; 0 picks 2n/R, which keeps the
/// mass a column of n/R samples leaks across one edge near one sample.
/// Result in [0, 1].
template <class T>
ndiff::Var<T> ioss_regularizer(ndiff::Var<T> z, double sharpness = 0.0) {
  using namespace ndiff;
  const std::size_t n = z.rows(), d = z.cols();
  if (n < kIossMinBatch)
    throw Error("ioss_regularizer: batch of " + std::to_string(n) + " is below the minimum of " +
                std::to_string(kIossMinBatch));
  if (d < 2) throw Error("ioss_regularizer: need at least two latent dimensions");
  Graph<T>& g = *z.graph;
  const std::size_t r = ioss_resolution(n);
  if (sharpness <= 0.0) sharpness = std::max(10.0, 2.0 * static_cast<double>(n) / static_cast<double>(r));

  const Var<T> centered = z - mean_rows(z);
  const Var<T> u = centered / sqrt(affine(mean_rows(square(centered)), T(1), T(1e-8)));

  Tensor<T> steps = Tensor<T>::matrix(1, r + 1);
  for (std::size_t k = 0; k <= r; ++k) steps[k] = static_cast<T>(static_cast<double>(k) / static_cast<double>(r));
  const Var<T> vsteps = g.constant(steps);
  const std::size_t q = static_cast<std::size_t>(std::floor(0.01 * static_cast<double>(n - 1)));

  // Soft one-hot cell memberships per dimension, [n, r].
  std::vector<Var<T>> member;
  for (std::size_t a = 0; a < d; ++a) {
    const Var<T> col = slice_cols(u, a, a + 1);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return col.value()[i] < col.value()[j]; });
    Tensor<T> mlo = Tensor<T>::matrix(n, 1), mhi = Tensor<T>::matrix(n, 1);
    mlo[order[q]] = T(1);
    mhi[order[n - 1 - q]] = T(1);
    const Var<T> lo = sum_rows(col * g.constant(mlo));
    const Var<T> span = affine(sum_rows(col * g.constant(mhi)) - lo, T(1), T(1e-6));
    const Var<T> edges = lo + span * vsteps;
    const Var<T> s = sigmoid(scale((col - edges) / span, static_cast<T>(sharpness * static_cast<double>(r))));
    member.push_back(slice_cols(s, 0, r) - slice_cols(s, 1, r + 1));
  }

  // Expansion matrices: (m_a E_a) * (m_b E_b) gives the product-cell membership.
  Tensor<T> ea = Tensor<T>::matrix(r, r * r), eb = Tensor<T>::matrix(r, r * r);
  for (std::size_t p = 0; p < r; ++p)
    for (std::size_t q = 0; q < r; ++q) {
      ea(p, p * r + q) = T(1);
      eb(q, p * r + q) = T(1);
    }
  const Var<T> vea = g.constant(ea), veb = g.constant(eb);

  std::vector<Var<T>> per_pair;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a + 1; b < d; ++b) {
      const Var<T> w = matmul(member[a], vea) * matmul(member[b], veb);
      const Var<T> log_empty = sum_rows(log(affine(w, T(-1), T(1))));
      per_pair.push_back(exp(log_empty));
    }
  return mean(concat_cols(per_pair));
}

}  // namespace cdisent::models
