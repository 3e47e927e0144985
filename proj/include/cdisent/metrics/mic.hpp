#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "cdisent/core/error.hpp"

namespace cdisent::metrics {

struct MicSettings {
  double budget_exponent = 0.6;  ///< grids with k * l <= N^exponent
  std::size_t max_bins = 8;
};

struct MicResult {
  double mic = 0.0;
  double tic = 0.0;
  bool constant_input = false;
};

namespace detail {

/// Equal-frequency bins from ranks; tied values share the bin of their first
/// rank, so a bin boundary never splits a tie.
inline std::vector<std::size_t> equal_frequency_bins(std::span<const double> v, std::size_t bins, std::size_t& used) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<std::size_t> out(n);
  std::size_t first = 0;
  std::vector<char> seen(bins, 0);
  for (std::size_t p = 0; p < n; ++p) {
    if (p > 0 && v[order[p]] != v[order[p - 1]]) first = p;
    const std::size_t b = first * bins / n;
    out[order[p]] = b;
    seen[b] = 1;
  }
  // Renumber to consecutive occupied bins.
  std::vector<std::size_t> remap(bins);
  used = 0;
  for (std::size_t b = 0; b < bins; ++b)
    if (seen[b]) remap[b] = used++;
  for (auto& b : out) b = remap[b];
  return out;
}

/// Sum of -p log p with the terms sorted first, so the value depends only on
/// the multiset of counts.
inline double entropy(std::vector<double> counts, double n) {
  std::vector<double> terms;
  for (double c : counts)
    if (c > 0.0) terms.push_back(-(c / n) * std::log(c / n));
  std::sort(terms.begin(), terms.end());
  double h = 0.0;
  for (double t : terms) h += t;
  return h;
}

}  // namespace detail

/// Restricted-grid MIC and TIC. Every grid k x l with 2 <= k, l <= max_bins
/// and k l <= N^0.6 is scored as I(bin x; bin y) / log min(k', l'), with k',
/// l' the occupied bin counts; MIC is the maximum, TIC the mean. The search
/// and the arithmetic are symmetric, so swapping x and y gives identical bits.
inline MicResult mic(std::span<const double> x, std::span<const double> y, const MicSettings& s = {}) {
  const std::size_t n = x.size();
  if (y.size() != n) throw ShapeError("mic: inputs differ in length");
  if (n < 500) throw Error("mic: need at least 500 samples, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw NumericError("mic: non-finite input");
  MicResult res;
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*xmin == *xmax || *ymin == *ymax) {
    res.constant_input = true;
    return res;
  }
  const double budget = std::pow(static_cast<double>(n), s.budget_exponent);
  std::vector<std::vector<std::size_t>> xb(s.max_bins + 1), yb(s.max_bins + 1);
  std::vector<std::size_t> xu(s.max_bins + 1), yu(s.max_bins + 1);
  for (std::size_t k = 2; k <= s.max_bins; ++k) {
    xb[k] = detail::equal_frequency_bins(x, k, xu[k]);
    yb[k] = detail::equal_frequency_bins(y, k, yu[k]);
  }
  std::vector<double> scores;
  const double nn = static_cast<double>(n);
  for (std::size_t k = 2; k <= s.max_bins; ++k)
    for (std::size_t l = 2; l <= s.max_bins; ++l) {
      if (static_cast<double>(k * l) > budget) continue;
      const std::size_t ku = xu[k], lu = yu[l];
      double score = 0.0;
      if (ku >= 2 && lu >= 2) {
        std::vector<double> joint(ku * lu, 0.0), px(ku, 0.0), py(lu, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          joint[xb[k][i] * lu + yb[l][i]] += 1.0;
          px[xb[k][i]] += 1.0;
          py[yb[l][i]] += 1.0;
        }
        const double mi = (detail::entropy(px, nn) + detail::entropy(py, nn)) - detail::entropy(joint, nn);
        score = std::clamp(mi / std::log(static_cast<double>(std::min(ku, lu))), 0.0, 1.0);
      }
      scores.push_back(score);
    }
  if (scores.empty()) throw Error("mic: grid budget admits no 2 x 2 grid");
  std::sort(scores.begin(), scores.end());
  res.mic = scores.back();
  double t = 0.0;
  for (double v : scores) t += v;
  res.tic = t / static_cast<double>(scores.size());
  return res;
}

}  // namespace cdisent::metrics
