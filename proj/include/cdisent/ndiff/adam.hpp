#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/params.hpp"

namespace cdisent::ndiff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  AdamConfig config;
  std::size_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  AdamState() = default;
  AdamState(const ParamSet<T>& params, AdamConfig cfg) : config(cfg) {
    for (const auto& e : params) {
      m.emplace_back(e.value.shape(), T(0));
      v.emplace_back(e.value.shape(), T(0));
    }
  }
};

/// One bias-corrected Adam update using the gradients stored in `params`.
template <class T>
void adam_step(ParamSet<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: optimizer state built for a different parameter set");
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double corr1 = 1.0 - std::pow(c.beta1, t);
  const double corr2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& e = params.entry(k);
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.shape() != e.value.shape())
      throw ShapeError("adam_step: moment shape mismatch for '" + e.name + "'");
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = static_cast<double>(e.grad[i]);
      const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / corr1;
      const double vhat = vi / corr2;
      e.value[i] = static_cast<T>(static_cast<double>(e.value[i]) -
                                  c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

}  // namespace cdisent::ndiff
