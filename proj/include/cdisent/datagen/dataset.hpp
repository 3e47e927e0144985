#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/datagen/render.hpp"
#include "cdisent/datagen/spec.hpp"

namespace cdisent::datagen {

/// Observations with ground-truth factors and a confounder label per sample.
/// Storage is flat and row-major: x is [n, obs_dim], g is [n, K].
struct LabeledDataset {
  std::vector<std::size_t> obs_shape;
  std::vector<std::string> factor_names;
  std::vector<std::size_t> factor_cards;
  std::size_t conf_card = 1;
  std::vector<float> x;
  std::vector<std::uint16_t> g;
  std::vector<std::uint16_t> c;

  std::size_t size() const noexcept { return c.size(); }
  std::size_t n_factors() const noexcept { return factor_cards.size(); }

  std::size_t obs_dim() const {
    std::size_t n = 1;
    for (std::size_t e : obs_shape) n *= e;
    return n;
  }

  std::span<const float> obs(std::size_t i) const { return {x.data() + i * obs_dim(), obs_dim()}; }
  std::span<const std::uint16_t> factors(std::size_t i) const {
    return {g.data() + i * n_factors(), n_factors()};
  }
  std::uint16_t factor(std::size_t i, std::size_t k) const { return g[i * n_factors() + k]; }

  /// Column k of the factor labels.
  std::vector<std::uint16_t> factor_column(std::size_t k) const {
    std::vector<std::uint16_t> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = factor(i, k);
    return out;
  }

  std::size_t factor_index(const std::string& name) const {
    for (std::size_t k = 0; k < factor_names.size(); ++k)
      if (factor_names[k] == name) return k;
    throw Error("dataset has no factor named '" + name + "'");
  }

  void validate() const {
    if (size() == 0) throw Error("LabeledDataset: empty");
    if (obs_shape.empty()) throw Error("LabeledDataset: observation shape missing");
    if (factor_names.size() != factor_cards.size()) throw Error("LabeledDataset: factor names and cards differ");
    if (x.size() != size() * obs_dim()) throw ShapeError("LabeledDataset: observation buffer size mismatch");
    if (g.size() != size() * n_factors()) throw ShapeError("LabeledDataset: factor buffer size mismatch");
    for (float v : x)
      if (!std::isfinite(v)) throw NumericError("LabeledDataset: non-finite observation");
    for (std::size_t i = 0; i < size(); ++i) {
      if (c[i] >= conf_card)
        throw Error("LabeledDataset: confounder label " + std::to_string(c[i]) + " >= " + std::to_string(conf_card));
      for (std::size_t k = 0; k < n_factors(); ++k)
        if (factor(i, k) >= factor_cards[k])
          throw Error("LabeledDataset: factor '" + factor_names[k] + "' label out of range at sample " +
                      std::to_string(i));
    }
  }

  LabeledDataset subset(std::span<const std::size_t> idx) const {
    LabeledDataset out = empty_like();
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(*this, i);
    return out;
  }

  LabeledDataset empty_like() const {
    LabeledDataset out;
    out.obs_shape = obs_shape;
    out.factor_names = factor_names;
    out.factor_cards = factor_cards;
    out.conf_card = conf_card;
    return out;
  }

  void reserve(std::size_t n) {
    x.reserve(n * obs_dim());
    g.reserve(n * n_factors());
    c.reserve(n);
  }

  void push_back(const LabeledDataset& src, std::size_t i) {
    auto o = src.obs(i);
    x.insert(x.end(), o.begin(), o.end());
    auto f = src.factors(i);
    g.insert(g.end(), f.begin(), f.end());
    c.push_back(src.c[i]);
  }

  bool operator==(const LabeledDataset&) const = default;
};

inline LabeledDataset empty_dataset(const GenSpec& spec) {
  LabeledDataset ds;
  ds.obs_shape = spec.obs_shape();
  for (const auto& f : spec.factors.factors) {
    ds.factor_names.push_back(f.name);
    ds.factor_cards.push_back(f.card);
  }
  ds.conf_card = spec.n_confounders();
  return ds;
}

namespace detail {

/// Draw one sample: c, then each factor given c, then the observation.
/// `label` overrides the stored confounder label when set.
inline void draw_sample(const Renderer& r, std::uint64_t seed, LabeledDataset& out, int label = -1) {
  const GenSpec& spec = r.spec();
  Rng rng(seed);
  const std::size_t c = rng.categorical(spec.confounder_prior);
  std::vector<std::uint16_t> g(spec.factors.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    g[k] = static_cast<std::uint16_t>(rng.categorical(spec.conditionals[c][k]));
  const std::size_t off = out.x.size();
  out.x.resize(off + spec.obs_dim());
  r.render_into(g, rng.next_u64(), std::span<float>(out.x.data() + off, spec.obs_dim()));
  out.g.insert(out.g.end(), g.begin(), g.end());
  out.c.push_back(static_cast<std::uint16_t>(label >= 0 ? static_cast<std::size_t>(label) : c));
}

}  // namespace detail

/// n i.i.d. samples; sample i uses the stream derive_seed(seed, i).
inline LabeledDataset sample_dataset(const GenSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("sample_dataset: n must be >= 1");
  const Renderer r(spec);
  LabeledDataset ds = empty_dataset(spec);
  ds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) detail::draw_sample(r, derive_seed(seed, i), ds);
  return ds;
}

/// Train/target split for the shift-severity protocol. round(s * n_train)
/// training samples come from the confounded spec and keep their confounder
/// label; the rest come from the decorrelated regime (same factor marginals,
/// factors independent) and are labelled with the extra value n_conf. The
/// target set is drawn entirely from the decorrelated regime, also labelled
/// n_conf. conf_card of both sets is n_conf + 1.
inline std::pair<LabeledDataset, LabeledDataset> shifted_split(const GenSpec& spec, double severity,
                                                               std::size_t n_train, std::size_t n_target,
                                                               std::uint64_t seed) {
  if (!(severity >= 0.0 && severity <= 1.0)) throw Error("shifted_split: severity must lie in [0, 1]");
  if (n_train == 0 || n_target == 0) throw Error("shifted_split: sample counts must be >= 1");
  const Renderer corr(spec);
  const Renderer decor(spec.decorrelated());
  const int decor_label = static_cast<int>(spec.n_confounders());
  const std::size_t n_corr = static_cast<std::size_t>(std::llround(severity * static_cast<double>(n_train)));

  LabeledDataset pool = empty_dataset(spec);
  pool.conf_card = spec.n_confounders() + 1;
  pool.reserve(n_train);
  for (std::size_t i = 0; i < n_train; ++i) {
    const std::uint64_t s = derive_seed(derive_seed(seed, 0), i);
    if (i < n_corr) detail::draw_sample(corr, s, pool);
    else detail::draw_sample(decor, s, pool, decor_label);
  }
  // Interleave the two regimes so that file order carries no information.
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffler(derive_seed(seed, 2));
  shuffler.shuffle(order.begin(), order.end());
  LabeledDataset train = pool.subset(order);

  LabeledDataset target = empty_dataset(spec);
  target.conf_card = spec.n_confounders() + 1;
  target.reserve(n_target);
  for (std::size_t i = 0; i < n_target; ++i)
    detail::draw_sample(decor, derive_seed(derive_seed(seed, 1), i), target, decor_label);
  return {std::move(train), std::move(target)};
}

// -- confounder label sets for ablations ---------------------------------

/// Every sample gets label 0 (the empty label set, one component).
inline LabeledDataset with_constant_label(LabeledDataset ds) {
  std::fill(ds.c.begin(), ds.c.end(), std::uint16_t{0});
  ds.conf_card = 1;
  return ds;
}

/// Deterministic surjection merging the first `n_conf` labels into `groups`
/// groups (c -> c * groups / n_conf); labels >= n_conf (e.g. the
/// decorrelated-regime label) map to consecutive values after the groups.
inline LabeledDataset with_merged_labels(LabeledDataset ds, std::size_t n_conf, std::size_t groups) {
  if (groups == 0 || groups > n_conf) throw Error("with_merged_labels: need 1 <= groups <= n_conf");
  for (auto& c : ds.c)
    c = static_cast<std::uint16_t>(c < n_conf ? c * groups / n_conf : groups + (c - n_conf));
  ds.conf_card = groups + (ds.conf_card > n_conf ? ds.conf_card - n_conf : 0);
  return ds;
}

/// Refines every label by an irrelevant random bit: c -> 2c + b.
inline LabeledDataset with_refined_labels(LabeledDataset ds, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& c : ds.c) c = static_cast<std::uint16_t>(2 * c + rng.below(2));
  ds.conf_card *= 2;
  return ds;
}

}  // namespace cdisent::datagen
