#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/graph.hpp"

namespace cdisent::ndiff {

/// max over entries of |a - n| / max(|a|, |n|, 1e-8).
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Compares `analytic` gradients (same layout as `params`) against central
/// differences of `value_fn`. Parameters are restored before returning.
template <class ValueFn>
double grad_check_against(ValueFn&& value_fn, ParamSet<double>& params,
                          const ParamSet<double>& analytic, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& e = params.entry(k);
    const auto& a = analytic.entry(k).grad;
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double orig = e.value[i];
      e.value[i] = orig + eps;
      const double fp = value_fn(params);
      e.value[i] = orig - eps;
      const double fm = value_fn(params);
      e.value[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite loss while perturbing '" + e.name + "'");
      worst = std::max(worst, relative_error(a[i], (fp - fm) / (2.0 * eps)));
    }
  }
  return worst;
}

/// `loss_fn(Graph<double>&, const ParamSet<double>&) -> Var<double>` builds a
/// scalar loss. Returns the worst relative error between backward() and
/// central differences.
template <class LossFn>
double grad_check(LossFn&& loss_fn, ParamSet<double>& params, double eps) {
  if (!(eps > 0.0)) throw Error("grad_check: eps must be positive");
  {
    Graph<double> g;
    Var<double> loss = loss_fn(g, params);
    g.backward(loss, params);
  }
  ParamSet<double> analytic = params;
  auto value_fn = [&](const ParamSet<double>& p) {
    Graph<double> g;
    return loss_fn(g, p).value().item();
  };
  return grad_check_against(value_fn, params, analytic, eps);
}

}  // namespace cdisent::ndiff
