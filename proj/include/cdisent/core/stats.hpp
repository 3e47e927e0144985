#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "cdisent/core/error.hpp"

namespace cdisent::stats {

/// Order-statistic support bounds: the values at sorted positions
/// floor(q (n-1)) and n-1-floor(q (n-1)). The symmetric index choice keeps
/// the pair invariant under negation and sample order.
inline std::pair<double, double> quantile_bounds(std::vector<double> v, double q) {
  if (v.empty()) throw Error("quantile_bounds: no values");
  std::sort(v.begin(), v.end());
  const std::size_t lo = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
  return {v[lo], v[v.size() - 1 - lo]};
}

/// Mean and population standard deviation, each accumulated over sorted
/// values so the result does not depend on sample order.
inline std::pair<double, double> mean_std(std::vector<double> v) {
  if (v.empty()) throw Error("mean_std: no values");
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = (v[i] - m) * (v[i] - m);
  std::sort(dev.begin(), dev.end());
  double ss = 0.0;
  for (double d : dev) ss += d;
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw Error("mean: no values");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1); 0 for fewer than two values.
inline double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace cdisent::stats
