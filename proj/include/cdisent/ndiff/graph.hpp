#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/params.hpp"
#include "cdisent/ndiff/tensor.hpp"

namespace cdisent::ndiff {

/// Lower bound applied to inputs of log, sqrt and division.
inline constexpr double kClampFloor = 1e-12;

template <class T>
class Graph;

/// Handle to a node recorded on a Graph. Cheap to copy; valid while the
/// owning graph is alive.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(*this); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a node's
/// inputs always have smaller ids and a single descending sweep is a valid
/// reverse topological order.
template <class T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr); }

  /// Leaf bound to a named parameter; gradients flow back into `params`
  /// when backward() is called with the same set.
  Var<T> param(const ParamSet<T>& params, const std::string& name) {
    const std::size_t idx = params.index_of(name);
    Var<T> v = push(params.entry(idx).value, {}, nullptr);
    nodes_[v.id].param_index = static_cast<long>(idx);
    return v;
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Number of elements clamped by log/sqrt/div guards so far.
  std::size_t clamp_events() const noexcept { return clamp_events_; }
  void note_clamps(std::size_t n) { clamp_events_ += n; }

  /// Accumulate d(loss)/d(param) into `params`' gradient buffers. Buffers are
  /// zeroed first, so parameters the loss does not reach end up with zero.
  void backward(Var<T> loss, ParamSet<T>& params) {
    if (loss.graph != this) throw Error("backward: loss belongs to another graph");
    if (value(loss).size() != 1)
      throw ShapeError("backward: loss must be a scalar, got shape " +
                       shape_str(value(loss).shape()));
    for (auto& n : nodes_) n.grad = Tensor<T>();
    params.zero_grad();
    grad_ref(loss.id).fill(T(1));
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      if (n.back) n.back(*this, id);
      if (n.param_index >= 0) {
        auto& g = params.entry(static_cast<std::size_t>(n.param_index)).grad;
        if (g.size() != n.grad.size())
          throw ShapeError("backward: gradient/parameter shape mismatch for '" +
                           params.entry(static_cast<std::size_t>(n.param_index)).name + "'");
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      }
    }
  }

  // -- for op implementations -------------------------------------------

  Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, Backward back) {
    if (!value.all_finite())
      throw NumericError("non-finite value produced (node " + std::to_string(nodes_.size()) +
                         ", shape " + shape_str(value.shape()) + ")");
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(inputs), std::move(back), -1});
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value_at(std::size_t id) const { return nodes_[id].value; }
  const Tensor<T>& grad_at(std::size_t id) const { return nodes_[id].grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }

  Tensor<T>& grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    Backward back;
    long param_index;
  };

  std::vector<Node> nodes_;
  std::size_t clamp_events_ = 0;
};

namespace detail {

template <class T>
void same_graph(Var<T> a, Var<T> b, const char* op) {
  if (a.graph != b.graph || a.graph == nullptr)
    throw Error(std::string(op) + ": operands from different graphs");
}

struct Broadcast {
  std::size_t rows, cols;
};

inline Broadcast broadcast_dims(std::size_t ar, std::size_t ac, std::size_t br, std::size_t bc,
                                const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": cannot broadcast [" + std::to_string(ar) + "," +
                     std::to_string(ac) + "] with [" + std::to_string(br) + "," +
                     std::to_string(bc) + "]");
  };
  return {dim(ar, br), dim(ac, bc)};
}

/// Sum a full-size gradient down to an operand's (possibly broadcast) shape.
template <class T>
void reduce_into(Tensor<T>& dst, const Tensor<T>& src, std::size_t rows, std::size_t cols,
                 const std::function<T(std::size_t, std::size_t)>& scale) {
  const std::size_t dr = dst.rows(), dc = dst.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      dst[(dr == 1 ? 0 : r) * dc + (dc == 1 ? 0 : c)] += src[r * cols + c] * scale(r, c);
}

enum class BinOp { Add, Sub, Mul, Div };

template <class T>
Var<T> binary(Var<T> a, Var<T> b, BinOp op, const char* name) {
  same_graph(a, b, name);
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  const std::size_t ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  const auto [rows, cols] = broadcast_dims(ar, ac, br, bc, name);
  Tensor<T> out = Tensor<T>::matrix(rows, cols);
  std::size_t clamps = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const T x = av[(ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c)];
      T y = bv[(br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c)];
      T z{};
      switch (op) {
        case BinOp::Add: z = x + y; break;
        case BinOp::Sub: z = x - y; break;
        case BinOp::Mul: z = x * y; break;
        case BinOp::Div:
          if (std::abs(y) < T(kClampFloor)) {
            y = y < T(0) ? T(-kClampFloor) : T(kClampFloor);
            ++clamps;
          }
          z = x / y;
          break;
      }
      out[r * cols + c] = z;
    }
  g.note_clamps(clamps);
  return g.push(std::move(out), {a.id, b.id}, [op, rows, cols](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor<T>& G = g.grad_at(self);
    const Tensor<T>& A = g.value_at(ia);
    const Tensor<T>& B = g.value_at(ib);
    auto at = [&](const Tensor<T>& t, std::size_t r, std::size_t c) {
      return t[(t.rows() == 1 ? 0 : r) * t.cols() + (t.cols() == 1 ? 0 : c)];
    };
    auto safe = [](T y) {
      return std::abs(y) < T(kClampFloor) ? (y < T(0) ? T(-kClampFloor) : T(kClampFloor)) : y;
    };
    switch (op) {
      case BinOp::Add:
        reduce_into<T>(g.grad_ref(ia), G, rows, cols, [](auto, auto) { return T(1); });
        reduce_into<T>(g.grad_ref(ib), G, rows, cols, [](auto, auto) { return T(1); });
        break;
      case BinOp::Sub:
        reduce_into<T>(g.grad_ref(ia), G, rows, cols, [](auto, auto) { return T(1); });
        reduce_into<T>(g.grad_ref(ib), G, rows, cols, [](auto, auto) { return T(-1); });
        break;
      case BinOp::Mul:
        reduce_into<T>(g.grad_ref(ia), G, rows, cols, [&](auto r, auto c) { return at(B, r, c); });
        reduce_into<T>(g.grad_ref(ib), G, rows, cols, [&](auto r, auto c) { return at(A, r, c); });
        break;
      case BinOp::Div:
        reduce_into<T>(g.grad_ref(ia), G, rows, cols,
                       [&](auto r, auto c) { return T(1) / safe(at(B, r, c)); });
        reduce_into<T>(g.grad_ref(ib), G, rows, cols, [&](auto r, auto c) {
          const T y = safe(at(B, r, c));
          return -at(A, r, c) / (y * y);
        });
        break;
    }
  });
}

/// Elementwise unary op given f(x) and f'(x) expressed through (x, f(x)).
template <class T, class F, class DF>
Var<T> unary(Var<T> a, F f, DF df) {
  Graph<T>& g = *a.graph;
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return g.push(std::move(out), {a.id}, [df](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    const Tensor<T>& X = g.value_at(ia);
    const Tensor<T>& Y = g.value_at(self);
    Tensor<T>& dX = g.grad_ref(ia);
    for (std::size_t i = 0; i < G.size(); ++i) dX[i] += G[i] * df(X[i], Y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic with row/column broadcasting.

template <class T>
Var<T> operator+(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::BinOp::Add, "add"); }
template <class T>
Var<T> operator-(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::BinOp::Sub, "sub"); }
template <class T>
Var<T> operator*(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::BinOp::Mul, "mul"); }
/// Division; divisors with |y| < 1e-12 are clamped away from zero.
template <class T>
Var<T> operator/(Var<T> a, Var<T> b) { return detail::binary(a, b, detail::BinOp::Div, "div"); }

/// k * a + b for constants k, b.
template <class T>
Var<T> affine(Var<T> a, T k, T b = T(0)) {
  return detail::unary(a, [k, b](T x) { return k * x + b; }, [k](T, T) { return k; });
}

template <class T>
Var<T> scale(Var<T> a, T k) { return affine(a, k, T(0)); }

template <class T>
Var<T> operator-(Var<T> a) { return affine(a, T(-1), T(0)); }

template <class T>
Var<T> exp(Var<T> a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

/// Natural log; inputs below 1e-12 are clamped (and counted on the graph).
template <class T>
Var<T> log(Var<T> a) {
  std::size_t clamps = 0;
  for (T v : a.value().data())
    if (v < T(kClampFloor)) ++clamps;
  a.graph->note_clamps(clamps);
  return detail::unary(
      a, [](T x) { return std::log(std::max(x, T(kClampFloor))); },
      [](T x, T) { return x < T(kClampFloor) ? T(0) : T(1) / x; });
}

template <class T>
Var<T> sqrt(Var<T> a) {
  std::size_t clamps = 0;
  for (T v : a.value().data())
    if (v < T(kClampFloor)) ++clamps;
  a.graph->note_clamps(clamps);
  return detail::unary(
      a, [](T x) { return std::sqrt(std::max(x, T(kClampFloor))); },
      [](T x, T y) { return x < T(kClampFloor) ? T(0) : T(0.5) / y; });
}

template <class T>
Var<T> tanh(Var<T> a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> relu(Var<T> a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> softplus(Var<T> a) {
  return detail::unary(
      a, [](T x) { return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](T x, T) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
      });
}

template <class T>
Var<T> square(Var<T> a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

/// Clip to [lo, hi]; zero gradient outside the interval.
template <class T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  return detail::unary(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions.

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_graph(a, b, "matmul");
  const Tensor<T>& A = a.value();
  const Tensor<T>& B = b.value();
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k)
    throw ShapeError("matmul: inner dimensions differ (" + shape_str(A.shape()) + " x " +
                     shape_str(B.shape()) + ")");
  Tensor<T> out = Tensor<T>::matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    T* o = &out[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * brow[j];
    }
  }
  return a.graph->push(std::move(out), {a.id, b.id}, [m, k, n](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0), ib = g.input(self, 1);
    const Tensor<T>& G = g.grad_at(self);
    const Tensor<T>& A = g.value_at(ia);
    const Tensor<T>& B = g.value_at(ib);
    Tensor<T>& dA = g.grad_ref(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        T s{};
        for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
        dA[i * k + p] += s;
      }
    Tensor<T>& dB = g.grad_ref(ib);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = A[i * k + p];
        if (aip == T(0)) continue;
        for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += aip * G[i * n + j];
      }
  });
}

/// Sum of all entries, as a 1x1 tensor.
template <class T>
Var<T> sum(Var<T> a) {
  T s{};
  for (T v : a.value().data()) s += v;
  return a.graph->push(Tensor<T>::scalar(s), {a.id}, [](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const T gs = g.grad_at(self)[0];
    for (auto& d : g.grad_ref(ia).data()) d += gs;
  });
}

template <class T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Column sums: [r, c] -> [1, c].
template <class T>
Var<T> sum_rows(Var<T> a) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> out = Tensor<T>::matrix(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += A[i * c + j];
  return a.graph->push(std::move(out), {a.id}, [r, c](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += G[j];
  });
}

template <class T>
Var<T> mean_rows(Var<T> a) {
  return scale(sum_rows(a), T(1) / static_cast<T>(a.value().rows()));
}

/// Row sums: [r, c] -> [r, 1].
template <class T>
Var<T> sum_cols(Var<T> a) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> out = Tensor<T>::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += A[i * c + j];
  return a.graph->push(std::move(out), {a.id}, [r, c](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += G[i];
  });
}

/// Row-wise softmax.
template <class T>
Var<T> softmax_rows(Var<T> a) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> out = Tensor<T>::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    T mx = A[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, A[i * c + j]);
    T z{};
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(A[i * c + j] - mx));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return a.graph->push(std::move(out), {a.id}, [r, c](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    const Tensor<T>& Y = g.value_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i) {
      T dot{};
      for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * Y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += Y[i * c + j] * (G[i * c + j] - dot);
    }
  });
}

/// Row-wise log-softmax (numerically stable).
template <class T>
Var<T> log_softmax_rows(Var<T> a) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor<T> out = Tensor<T>::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    T mx = A[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, A[i * c + j]);
    T z{};
    for (std::size_t j = 0; j < c; ++j) z += std::exp(A[i * c + j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = A[i * c + j] - lse;
  }
  return a.graph->push(std::move(out), {a.id}, [r, c](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    const Tensor<T>& Y = g.value_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i) {
      T gs{};
      for (std::size_t j = 0; j < c; ++j) gs += G[i * c + j];
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] += G[i * c + j] - std::exp(Y[i * c + j]) * gs;
    }
  });
}

/// Columns [begin, end).
template <class T>
Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (begin >= end || end > c)
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside " + std::to_string(c) + " columns");
  const std::size_t w = end - begin;
  Tensor<T> out = Tensor<T>::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(&A[i * c + begin], w, &out[i * w]);
  return a.graph->push(std::move(out), {a.id}, [r, c, w, begin](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) d[i * c + begin + j] += G[i * w + j];
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Graph<T>& g = *parts.front().graph;
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::same_graph(parts.front(), p, "concat_cols");
    if (p.rows() != r) throw ShapeError("concat_cols: row counts differ");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(r, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& P = parts[k].value();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(&P[i * widths[k]], widths[k], &out[i * total + off]);
    off += widths[k];
  }
  return g.push(std::move(out), ids, [r, total, widths](Graph<T>& g, std::size_t self) {
    const Tensor<T>& G = g.grad_at(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Tensor<T>& d = g.grad_ref(g.input(self, k));
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < widths[k]; ++j) d[i * widths[k] + j] += G[i * total + off + j];
      off += widths[k];
    }
  });
}

/// out[i] = a[i, index[i]], shape [r, 1].
template <class T>
Var<T> pick(Var<T> a, const std::vector<std::size_t>& index) {
  const Tensor<T>& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (index.size() != r) throw ShapeError("pick: need one index per row");
  Tensor<T> out = Tensor<T>::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    if (index[i] >= c) throw ShapeError("pick: column index out of range");
    out[i] = A[i * c + index[i]];
  }
  return a.graph->push(std::move(out), {a.id}, [c, index](Graph<T>& g, std::size_t self) {
    const std::size_t ia = g.input(self, 0);
    const Tensor<T>& G = g.grad_at(self);
    Tensor<T>& d = g.grad_ref(ia);
    for (std::size_t i = 0; i < index.size(); ++i) d[i * c + index[i]] += G[i];
  });
}

// ---------------------------------------------------------------------------
// Composite losses.

/// Mean squared error over all entries.
template <class T>
Var<T> mse(Var<T> pred, Var<T> target) {
  return mean(square(pred - target));
}

/// Mean cross-entropy of row-wise logits against integer labels.
template <class T>
Var<T> cross_entropy_logits(Var<T> logits, const std::vector<std::size_t>& labels) {
  return scale(mean(pick(log_softmax_rows(logits), labels)), T(-1));
}

}  // namespace cdisent::ndiff
