#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdisent/core/error.hpp"

namespace cdisent::datagen {

/// Counts table [ka, kb] of two label columns.
inline std::vector<double> contingency(std::span<const std::uint16_t> a, std::span<const std::uint16_t> b,
                                       std::size_t ka, std::size_t kb) {
  if (a.size() != b.size()) throw ShapeError("contingency: columns differ in length");
  std::vector<double> t(ka * kb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] >= ka || b[i] >= kb) throw Error("contingency: label out of range");
    t[a[i] * kb + b[i]] += 1.0;
  }
  return t;
}

namespace detail {

inline double entropy_of(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts)
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace detail

/// I(a; b) / sqrt(H(a) H(b)) in nats from the plug-in estimate; 0 if either
/// column is constant.
inline double normalized_mi(std::span<const std::uint16_t> a, std::span<const std::uint16_t> b, std::size_t ka,
                            std::size_t kb) {
  const auto t = contingency(a, b, ka, kb);
  const double n = static_cast<double>(a.size());
  std::vector<double> ra(ka, 0.0), rb(kb, 0.0);
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j) {
      ra[i] += t[i * kb + j];
      rb[j] += t[i * kb + j];
    }
  const double ha = detail::entropy_of(ra, n), hb = detail::entropy_of(rb, n);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  const double mi = ha + hb - detail::entropy_of(t, n);
  return std::max(0.0, mi) / std::sqrt(ha * hb);
}

/// Cramer's V of the contingency table; 0 if a margin is degenerate.
inline double cramers_v(std::span<const std::uint16_t> a, std::span<const std::uint16_t> b, std::size_t ka,
                        std::size_t kb) {
  const auto t = contingency(a, b, ka, kb);
  const double n = static_cast<double>(a.size());
  std::vector<double> ra(ka, 0.0), rb(kb, 0.0);
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j) {
      ra[i] += t[i * kb + j];
      rb[j] += t[i * kb + j];
    }
  double chi2 = 0.0;
  for (std::size_t i = 0; i < ka; ++i)
    for (std::size_t j = 0; j < kb; ++j) {
      const double e = ra[i] * rb[j] / n;
      if (e > 0.0) chi2 += (t[i * kb + j] - e) * (t[i * kb + j] - e) / e;
    }
  const auto live = [](const std::vector<double>& m) {
    return static_cast<double>(std::count_if(m.begin(), m.end(), [](double v) { return v > 0.0; }));
  };
  const double m = std::min(live(ra), live(rb)) - 1.0;
  if (m <= 0.0) return 0.0;
  return std::sqrt(chi2 / (n * m));
}

}  // namespace cdisent::datagen
