#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/linalg.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/datagen/dataset.hpp"
#include "cdisent/models/config.hpp"
#include "cdisent/models/ioss_reg.hpp"
#include "cdisent/ndiff/graph.hpp"
#include "cdisent/ndiff/mlp.hpp"
#include "cdisent/ndiff/params.hpp"

namespace cdisent::models {

using ndiff::Graph;
using ndiff::ParamSet;
using ndiff::Tensor;
using ndiff::Var;

inline constexpr double kLogVarBound = 10.0;

template <class T>
struct Model {
  CdVaeConfig config;
  ParamSet<T> params;
};

/// Encoder then head; parameters drawn from derive_seed(config.seed, 0).
template <class T>
Model<T> make_model(const CdVaeConfig& cfg) {
  cfg.validate();
  Model<T> m{cfg, {}};
  Rng rng(derive_seed(cfg.seed, 0));
  ndiff::init_mlp(m.params, cfg.encoder_arch(), rng, cfg.zero_init_last);
  ndiff::init_mlp(m.params, cfg.head_arch(), rng, cfg.zero_init_last);
  return m;
}

/// One minibatch. `c` are confounder labels, `y` task labels (classifier head).
template <class T>
struct Batch {
  Tensor<T> x;
  std::vector<std::size_t> c;
  std::vector<std::size_t> y;
  /// Optional [B, heads] mixture weights replacing Pi in the aggregation.
  Tensor<T> route;
};

template <class T>
Batch<T> make_batch(const datagen::LabeledDataset& ds, std::span<const std::size_t> idx, const CdVaeConfig& cfg) {
  if (idx.empty()) throw Error("make_batch: empty batch");
  const std::size_t d = ds.obs_dim();
  if (d != cfg.input_dim)
    throw ShapeError("make_batch: dataset observations have " + std::to_string(d) + " features, model expects " +
                     std::to_string(cfg.input_dim));
  Batch<T> b{Tensor<T>::matrix(idx.size(), d), {}, {}, {}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto o = ds.obs(idx[r]);
    for (std::size_t j = 0; j < d; ++j) b.x(r, j) = static_cast<T>(o[j]);
    b.c.push_back(ds.c[idx[r]]);
    if (cfg.head == Head::Classifier) b.y.push_back(ds.factor(idx[r], cfg.task_factor));
  }
  return b;
}

/// Standard-normal draws for one batch: eps_z [B, heads*D], eps_pi [B, heads].
/// Empty tensors mean "evaluation mode": z = mu, pi logits = their mean.
template <class T>
struct Noise {
  Tensor<T> eps_z;
  Tensor<T> eps_pi;

  bool empty() const { return eps_z.empty(); }
};

template <class T>
Noise<T> draw_noise(Rng& rng, const CdVaeConfig& cfg, std::size_t batch) {
  Noise<T> n;
  n.eps_z = Tensor<T>::matrix(batch, cfg.heads() * cfg.latent_dim);
  for (auto& v : n.eps_z.data()) v = static_cast<T>(rng.normal());
  if (cfg.has_pi() && cfg.sample_pi) {
    n.eps_pi = Tensor<T>::matrix(batch, cfg.heads());
    for (auto& v : n.eps_pi.data()) v = static_cast<T>(rng.normal());
  }
  return n;
}

/// Graph handles of one forward pass.
template <class T>
struct Forward {
  std::vector<Var<T>> mu;      ///< per head, [B, D]
  std::vector<Var<T>> logvar;  ///< per head, [B, D], clamped to [-10, 10]
  std::vector<Var<T>> zc;      ///< per head reparameterized samples
  bool has_pi = false;
  Var<T> pi_mean, pi_logsd;    ///< [B, heads]
  Var<T> pi_logits;            ///< sampled (training) or mean (evaluation)
  Var<T> weights;              ///< Pi, [B, heads]
  Var<T> z;                    ///< aggregated latent [B, D]
  Var<T> out;                  ///< reconstruction [B, input] or class logits
};

template <class T>
Tensor<T> onehot(const std::vector<std::size_t>& labels, std::size_t width) {
  Tensor<T> t = Tensor<T>::matrix(labels.size(), width);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= width)
      throw Error("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(width) + ")");
    t(i, labels[i]) = T(1);
  }
  return t;
}

/// z = mu + exp(logvar / 2) * eps.
template <class T>
Var<T> reparam(Var<T> mu, Var<T> logvar, Var<T> eps) {
  return mu + ndiff::exp(ndiff::scale(logvar, T(0.5))) * eps;
}

/// Mixture weights from pi logits: softmax, or division by the row L2 norm.
template <class T>
Var<T> normalize_pi(Var<T> logits, PiPolicy policy) {
  if (policy == PiPolicy::Softmax) return ndiff::softmax_rows(logits);
  return logits / ndiff::sqrt(ndiff::sum_cols(ndiff::square(logits)));
}

/// z = sum_c Pi_c z^c.
template <class T>
Var<T> aggregate(const std::vector<Var<T>>& zc, Var<T> weights) {
  if (zc.size() != weights.cols()) throw ShapeError("aggregate: need one weight column per component");
  Var<T> z = ndiff::slice_cols(weights, 0, 1) * zc[0];
  for (std::size_t c = 1; c < zc.size(); ++c) z = z + ndiff::slice_cols(weights, c, c + 1) * zc[c];
  return z;
}

template <class T>
Forward<T> forward(Graph<T>& g, const CdVaeConfig& cfg, const ParamSet<T>& params, const Batch<T>& batch,
                   const Noise<T>& noise) {
  using namespace ndiff;
  const std::size_t b = batch.x.rows(), d = cfg.latent_dim, k = cfg.heads();
  if (batch.x.cols() != cfg.input_dim)
    throw ShapeError("forward: input has " + std::to_string(batch.x.cols()) + " features, model expects " +
                     std::to_string(cfg.input_dim));
  Var<T> x = g.constant(batch.x);
  Var<T> cond;
  if (cfg.conditional_input()) {
    cond = g.constant(onehot<T>(batch.c, cfg.onehot_width()));
    x = concat_cols<T>({x, cond});
  }
  const Var<T> h = mlp_forward(g, params, x, cfg.encoder_arch());

  Forward<T> f;
  const bool sample = !noise.empty();
  Var<T> eps = sample ? g.constant(noise.eps_z) : Var<T>{};
  for (std::size_t c = 0; c < k; ++c) {
    f.mu.push_back(slice_cols(h, c * d, (c + 1) * d));
    f.logvar.push_back(clamp(slice_cols(h, (k + c) * d, (k + c + 1) * d), T(-kLogVarBound), T(kLogVarBound)));
    f.zc.push_back(sample ? reparam(f.mu[c], f.logvar[c], slice_cols(eps, c * d, (c + 1) * d)) : f.mu[c]);
  }
  if (cfg.has_pi()) {
    f.has_pi = true;
    const std::size_t off = 2 * k * d;
    f.pi_mean = slice_cols(h, off, off + k);
    f.pi_logsd = clamp(slice_cols(h, off + k, off + 2 * k), T(-kLogVarBound), T(kLogVarBound));
    f.pi_logits = (sample && !noise.eps_pi.empty()) ? f.pi_mean + exp(f.pi_logsd) * g.constant(noise.eps_pi)
                                                    : f.pi_mean;
    f.weights = normalize_pi(f.pi_logits, cfg.pi_policy);
    f.z = aggregate(f.zc, batch.route.empty() ? f.weights : g.constant(batch.route));
  } else {
    f.weights = g.constant(Tensor<T>::matrix(b, 1, T(1)));
    f.z = f.zc[0];
  }
  Var<T> head_in = f.z;
  if (cfg.conditional_input() && cfg.head == Head::Decoder) head_in = concat_cols<T>({f.z, cond});
  f.out = mlp_forward(g, params, head_in, cfg.head_arch());
  return f;
}

/// Loss terms as graph nodes. `rec` is the data term: mean squared error for
/// the decoder head, task cross-entropy for the classifier head.
template <class T>
struct LossVars {
  Var<T> total, rec, cls, kl, ioss;
  bool has_cls = false, has_ioss = false;
};

template <class T>
Var<T> kl_term(const Forward<T>& f, KlForm form) {
  using namespace ndiff;
  // Per head: 1/2 sum_d [-logvar - 1 + exp(logvar)] (+ mu^2 for the full form),
  // summed over heads, averaged over the batch.
  Var<T> acc;
  for (std::size_t c = 0; c < f.mu.size(); ++c) {
    Var<T> e = affine(exp(f.logvar[c]) - f.logvar[c], T(1), T(-1));
    if (form == KlForm::Full) e = e + square(f.mu[c]);
    const Var<T> per_head = scale(sum_cols(e), T(0.5));
    acc = c == 0 ? per_head : acc + per_head;
  }
  return mean(acc);
}

template <class T>
LossVars<T> loss_graph(Graph<T>& g, const CdVaeConfig& cfg, const ParamSet<T>& params, const Batch<T>& batch,
                       const Noise<T>& noise) {
  using namespace ndiff;
  for (std::size_t c : batch.c)
    if (cfg.has_pi() && c >= cfg.heads())
      throw Error("loss: confounder label " + std::to_string(c) + " outside |C| = " + std::to_string(cfg.heads()));
  const Forward<T> f = forward(g, cfg, params, batch, noise);
  LossVars<T> l;
  if (cfg.head == Head::Decoder) {
    l.rec = mse(f.out, g.constant(batch.x));
  } else {
    if (batch.y.size() != batch.x.rows()) throw Error("loss: classifier head needs task labels");
    l.rec = cross_entropy_logits(f.out, batch.y);
  }
  l.kl = kl_term(f, cfg.effective_kl());
  l.total = scale(l.rec, static_cast<T>(cfg.w_rec)) + scale(l.kl, static_cast<T>(cfg.w_kl * cfg.beta));
  if (f.has_pi) {
    l.has_cls = true;
    l.cls = cfg.pi_policy == PiPolicy::Softmax
                ? cross_entropy_logits(f.pi_logits, batch.c)
                : scale(mean(log(clamp(pick(f.weights, batch.c), T(ndiff::kClampFloor), T(1e30)))), T(-1));
    l.total = l.total + scale(l.cls, static_cast<T>(cfg.w_cls));
  }
  if (cfg.has_ioss()) {
    l.has_ioss = true;
    l.ioss = ioss_regularizer(f.z);
    l.total = l.total + scale(l.ioss, static_cast<T>(cfg.w_ioss));
  }
  return l;
}

struct LossBreakdown {
  double total = 0, rec = 0, cls = 0, kl = 0, ioss = 0;
  // Effective weights: total = w_rec rec + w_cls cls + w_kl kl + w_ioss ioss.
  double w_rec = 0, w_cls = 0, w_kl = 0, w_ioss = 0;

  double weighted_sum() const { return w_rec * rec + w_cls * cls + w_kl * kl + w_ioss * ioss; }
};

template <class T>
LossBreakdown breakdown(const LossVars<T>& l, const CdVaeConfig& cfg) {
  LossBreakdown b;
  b.total = static_cast<double>(l.total.value().item());
  b.rec = static_cast<double>(l.rec.value().item());
  b.kl = static_cast<double>(l.kl.value().item());
  b.w_rec = cfg.w_rec;
  b.w_kl = cfg.w_kl * cfg.beta;
  if (l.has_cls) {
    b.cls = static_cast<double>(l.cls.value().item());
    b.w_cls = cfg.w_cls;
  }
  if (l.has_ioss) {
    b.ioss = static_cast<double>(l.ioss.value().item());
    b.w_ioss = cfg.w_ioss;
  }
  return b;
}

/// Loss and gradients (written into `params`) for one batch.
template <class T>
LossBreakdown loss(const CdVaeConfig& cfg, ParamSet<T>& params, const Batch<T>& batch, const Noise<T>& noise) {
  Graph<T> g;
  const LossVars<T> l = loss_graph(g, cfg, params, batch, noise);
  g.backward(l.total, params);
  return breakdown(l, cfg);
}

// -- deterministic evaluation ---------------------------------------------

/// Encoder statistics for one input, as plain values.
struct EncoderOutput {
  std::vector<std::vector<double>> mu;      ///< [heads][D]
  std::vector<std::vector<double>> logvar;  ///< [heads][D]
  std::vector<double> pi_mean;              ///< empty for a single head
  std::vector<double> pi_logsd;
};

template <class T>
std::vector<EncoderOutput> encode(const Model<T>& m, const Batch<T>& batch) {
  Graph<T> g;
  const Forward<T> f = forward(g, m.config, m.params, batch, Noise<T>{});
  const std::size_t b = batch.x.rows();
  std::vector<EncoderOutput> out(b);
  auto row = [](Var<T> v, std::size_t r) {
    const auto& t = v.value();
    std::vector<double> o(t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) o[j] = static_cast<double>(t(r, j));
    return o;
  };
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < f.mu.size(); ++c) {
      out[r].mu.push_back(row(f.mu[c], r));
      out[r].logvar.push_back(row(f.logvar[c], r));
    }
    if (f.has_pi) {
      out[r].pi_mean = row(f.pi_mean, r);
      out[r].pi_logsd = row(f.pi_logsd, r);
    }
  }
  return out;
}

/// Row-major [n, cols] matrix of doubles.
using Matrix = linalg::Mat;

/// [rows, heads] weights, each row the label prior (uniform if unset).
template <class T>
Tensor<T> prior_route(const CdVaeConfig& cfg, std::size_t rows) {
  const std::size_t k = cfg.heads();
  std::vector<double> p = cfg.label_prior;
  if (p.empty()) p.assign(k, 1.0);
  double s = 0.0;
  for (double v : p) s += v;
  if (!(s > 0.0)) throw Error("prior_route: label prior sums to zero");
  Tensor<T> t = Tensor<T>::matrix(rows, k);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < k; ++j) t(r, j) = static_cast<T>(p[j] / s);
  return t;
}

/// Runs `fn(forward, rows)` over the dataset in evaluation mode, in chunks.
/// With prior routing the mixture weights are the label prior, not Pi.
template <class T, class Fn>
void for_each_chunk(const Model<T>& m, const datagen::LabeledDataset& ds, Fn&& fn, std::size_t chunk = 512) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t end = std::min(ds.size(), start + chunk);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    Batch<T> b = make_batch<T>(ds, idx, m.config);
    if (m.config.has_pi() && m.config.eval_routing == Routing::Prior) b.route = prior_route<T>(m.config, idx.size());
    Graph<T> g;
    const Forward<T> f = forward(g, m.config, m.params, b, Noise<T>{});
    fn(f, b, start);
  }
}

/// Deterministic latent codes z = sum_c Pi_c mu^c, Pi per `eval_routing`.
template <class T>
Matrix embed(const Model<T>& m, const datagen::LabeledDataset& ds) {
  Matrix z(ds.size(), m.config.latent_dim);
  for_each_chunk(m, ds, [&](const Forward<T>& f, const Batch<T>& b, std::size_t start) {
    const auto& v = f.z.value();
    for (std::size_t r = 0; r < b.x.rows(); ++r)
      for (std::size_t j = 0; j < z.cols; ++j) z(start + r, j) = static_cast<double>(v(r, j));
  });
  return z;
}

/// Class distribution from the classifier head.
template <class T>
Matrix classify(const Model<T>& m, const datagen::LabeledDataset& ds) {
  if (m.config.head != Head::Classifier)
    throw Error("classify: model has a " + to_string(m.config.head) + " head, not a classifier");
  Matrix p(ds.size(), m.config.n_classes);
  for_each_chunk(m, ds, [&](const Forward<T>& f, const Batch<T>& b, std::size_t start) {
    const auto& v = f.out.value();
    for (std::size_t r = 0; r < b.x.rows(); ++r) {
      double mx = -1e300;
      for (std::size_t j = 0; j < p.cols; ++j) mx = std::max(mx, static_cast<double>(v(r, j)));
      double s = 0.0;
      for (std::size_t j = 0; j < p.cols; ++j) s += (p(start + r, j) = std::exp(static_cast<double>(v(r, j)) - mx));
      for (std::size_t j = 0; j < p.cols; ++j) p(start + r, j) /= s;
    }
  });
  return p;
}

/// Fraction of samples whose argmax class equals the task factor label.
template <class T>
double accuracy(const Model<T>& m, const datagen::LabeledDataset& ds) {
  const Matrix p = classify(m, ds);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < p.cols; ++j)
      if (p(i, j) > p(i, best)) best = j;
    hit += best == ds.factor(i, m.config.task_factor) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

/// Deterministic reconstructions, [n, input_dim].
template <class T>
Matrix reconstruct(const Model<T>& m, const datagen::LabeledDataset& ds) {
  if (m.config.head != Head::Decoder) throw Error("reconstruct: model has no decoder head");
  Matrix x(ds.size(), m.config.input_dim);
  for_each_chunk(m, ds, [&](const Forward<T>& f, const Batch<T>& b, std::size_t start) {
    const auto& v = f.out.value();
    for (std::size_t r = 0; r < b.x.rows(); ++r)
      for (std::size_t j = 0; j < x.cols; ++j) x(start + r, j) = static_cast<double>(v(r, j));
  });
  return x;
}

}  // namespace cdisent::models
