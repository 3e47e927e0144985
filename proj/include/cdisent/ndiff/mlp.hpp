#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/ndiff/graph.hpp"

namespace cdisent::ndiff {

enum class Activation { Tanh, Relu, Softplus, Identity };

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  if (s == "identity" || s == "linear") return Activation::Identity;
  throw Error("unknown activation '" + s + "'");
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
  }
  return "?";
}

/// Fully connected stack. `sizes` = {in, hidden..., out}; the activation is
/// applied between layers, never after the last one.
struct MlpArch {
  std::string prefix;
  std::vector<std::size_t> sizes;
  Activation activation = Activation::Tanh;

  std::size_t layers() const { return sizes.size() - 1; }
  std::size_t in() const { return sizes.front(); }
  std::size_t out() const { return sizes.back(); }
  std::string weight(std::size_t l) const { return prefix + ".w" + std::to_string(l); }
  std::string bias(std::size_t l) const { return prefix + ".b" + std::to_string(l); }
};

/// Registers weights [in, out] drawn N(0, 1/in) and zero biases [out].
template <class T>
void init_mlp(ParamSet<T>& params, const MlpArch& arch, Rng& rng, bool zero_last = false) {
  if (arch.sizes.size() < 2) throw ShapeError("init_mlp: need at least input and output sizes");
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const std::size_t fan_in = arch.sizes[l], fan_out = arch.sizes[l + 1];
    Tensor<T> w = Tensor<T>::matrix(fan_in, fan_out);
    const bool zero = zero_last && l + 1 == arch.layers();
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w.data()) v = zero ? T(0) : static_cast<T>(sd * rng.normal());
    params.add(arch.weight(l), std::move(w));
    params.add(arch.bias(l), Tensor<T>(Shape{fan_out}, T(0)));
  }
}

template <class T>
Var<T> activate(Var<T> x, Activation a) {
  switch (a) {
    case Activation::Tanh: return tanh(x);
    case Activation::Relu: return relu(x);
    case Activation::Softplus: return softplus(x);
    case Activation::Identity: return x;
  }
  return x;
}

template <class T>
Var<T> mlp_forward(Graph<T>& g, const ParamSet<T>& params, Var<T> x, const MlpArch& arch) {
  if (x.cols() != arch.in())
    throw ShapeError("mlp_forward(" + arch.prefix + "): input has " + std::to_string(x.cols()) +
                     " features, first layer expects " + std::to_string(arch.in()));
  Var<T> h = x;
  for (std::size_t l = 0; l < arch.layers(); ++l) {
    const auto& w = params.value(arch.weight(l));
    if (w.rows() != arch.sizes[l] || w.cols() != arch.sizes[l + 1])
      throw ShapeError("mlp_forward: parameter '" + arch.weight(l) + "' has shape " +
                       shape_str(w.shape()) + ", architecture expects [" +
                       std::to_string(arch.sizes[l]) + "," + std::to_string(arch.sizes[l + 1]) +
                       "]");
    h = matmul(h, g.param(params, arch.weight(l))) + g.param(params, arch.bias(l));
    if (l + 1 < arch.layers()) h = activate(h, arch.activation);
  }
  return h;
}

}  // namespace cdisent::ndiff
