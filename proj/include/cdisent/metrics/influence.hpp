#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/linalg.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/datagen/dataset.hpp"
#include "cdisent/datagen/render.hpp"
#include "cdisent/datagen/spec.hpp"

namespace cdisent::metrics {

using linalg::Mat;

/// Maps a dataset to its [n, D] latent codes.
using Encoder = std::function<Mat(const datagen::LabeledDataset&)>;

inline constexpr double kDeadStd = 1e-6;

/// K x D sensitivities; M(k, i) is how far latent i moves, in units of its
/// global standard deviation, when factor k alone is re-drawn.
struct InfluenceMatrix {
  Mat m;
  std::vector<bool> dead;  ///< per latent: global std below 1e-6

  std::size_t factors() const { return m.rows; }
  std::size_t latents() const { return m.cols; }
  std::size_t live() const { return static_cast<std::size_t>(std::count(dead.begin(), dead.end(), false)); }
};

struct ProbeSettings {
  std::size_t probes = 2000;
  std::uint64_t seed = 0;
  /// Confounder label stored on probe samples; unset keeps the drawn one.
  std::optional<std::uint16_t> label;
  std::size_t chunk = 256;  ///< probes rendered per encoder call
};

namespace detail {

/// Builds probe observations in chunks. `make(rng, c, base, variants)` fills
/// the variant factor vectors for one base assignment; every variant is
/// rendered with the base's noise seed so only the factors differ.
class ProbeBuilder {
 public:
  ProbeBuilder(const datagen::GenSpec& spec, const ProbeSettings& s) : spec_(spec), renderer_(spec), settings_(s) {
    if (s.probes == 0) throw Error("probes must be >= 1");
    if (s.chunk == 0) throw Error("probe chunk must be >= 1");
  }

  /// Calls `sink(latents, rows_per_probe, n_probes_in_chunk)` per chunk.
  template <class Make, class Sink>
  void run(const Encoder& enc, std::size_t variants, Make&& make, Sink&& sink) const {
    Rng rng(derive_seed(settings_.seed, 0));
    const std::size_t k = spec_.factors.size(), per = variants + 1;
    std::vector<std::uint16_t> base(k);
    std::vector<std::vector<std::uint16_t>> var(variants, std::vector<std::uint16_t>(k));
    for (std::size_t start = 0; start < settings_.probes; start += settings_.chunk) {
      const std::size_t n = std::min(settings_.chunk, settings_.probes - start);
      datagen::LabeledDataset ds = datagen::empty_dataset(spec_);
      if (settings_.label) ds.conf_card = std::max<std::size_t>(ds.conf_card, *settings_.label + 1u);
      ds.reserve(n * per);
      for (std::size_t p = 0; p < n; ++p) {
        const std::size_t c = rng.categorical(spec_.confounder_prior);
        for (std::size_t f = 0; f < k; ++f)
          base[f] = static_cast<std::uint16_t>(rng.categorical(spec_.conditionals[c][f]));
        const std::uint64_t noise = rng.next_u64();
        make(rng, c, base, var);
        const auto label = static_cast<std::uint16_t>(settings_.label ? *settings_.label : c);
        push(ds, base, noise, label);
        for (const auto& v : var) push(ds, v, noise, label);
      }
      const Mat z = enc(ds);
      if (z.rows != ds.size()) throw ShapeError("encoder returned " + std::to_string(z.rows) + " rows for " +
                                                std::to_string(ds.size()) + " probe samples");
      sink(z, per, n);
    }
  }

  const datagen::GenSpec& spec() const { return spec_; }

 private:
  void push(datagen::LabeledDataset& ds, const std::vector<std::uint16_t>& g, std::uint64_t noise,
            std::uint16_t label) const {
    const std::size_t off = ds.x.size();
    ds.x.resize(off + spec_.obs_dim());
    renderer_.render_into(g, noise, std::span<float>(ds.x.data() + off, spec_.obs_dim()));
    ds.g.insert(ds.g.end(), g.begin(), g.end());
    ds.c.push_back(label);
  }

  const datagen::GenSpec& spec_;
  datagen::Renderer renderer_;
  ProbeSettings settings_;
};

/// Global per-latent standard deviation accumulated across chunks.
struct Moments {
  std::vector<double> s, ss;
  std::size_t n = 0;

  void add(const Mat& z) {
    if (s.empty()) s.assign(z.cols, 0.0), ss.assign(z.cols, 0.0);
    for (std::size_t r = 0; r < z.rows; ++r)
      for (std::size_t i = 0; i < z.cols; ++i) {
        s[i] += z(r, i);
        ss[i] += z(r, i) * z(r, i);
      }
    n += z.rows;
  }

  double std(std::size_t i) const {
    const double m = s[i] / static_cast<double>(n);
    return std::sqrt(std::max(0.0, ss[i] / static_cast<double>(n) - m * m));
  }
};

}  // namespace detail

/// M(k, i) = E_g |z_i(g with factor k re-drawn) - z_i(g)| / std(z_i). Base
/// assignments and re-draws follow `spec` (pass the decorrelated regime to
/// probe factors independently).
inline InfluenceMatrix influence(const Encoder& enc, const datagen::GenSpec& spec, const ProbeSettings& s) {
  const detail::ProbeBuilder pb(spec, s);
  const std::size_t k = spec.factors.size();
  std::vector<double> acc;
  std::size_t d = 0;
  detail::Moments mom;
  pb.run(
      enc, k,
      [&](Rng& rng, std::size_t c, const std::vector<std::uint16_t>& base, auto& var) {
        for (std::size_t f = 0; f < k; ++f) {
          var[f] = base;
          var[f][f] = static_cast<std::uint16_t>(rng.categorical(spec.conditionals[c][f]));
        }
      },
      [&](const Mat& z, std::size_t per, std::size_t n) {
        if (acc.empty()) {
          d = z.cols;
          acc.assign(k * d, 0.0);
        }
        mom.add(z);
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t f = 0; f < k; ++f)
            for (std::size_t i = 0; i < d; ++i) acc[f * d + i] += std::abs(z(p * per + 1 + f, i) - z(p * per, i));
      });
  InfluenceMatrix im{Mat(k, d), std::vector<bool>(d, false)};
  for (std::size_t i = 0; i < d; ++i) {
    const double sd = mom.std(i);
    im.dead[i] = !(sd >= kDeadStd);
    for (std::size_t f = 0; f < k; ++f) {
      const double mean_dev = acc[f * d + i] / static_cast<double>(s.probes);
      im.m(f, i) = im.dead[i] ? mean_dev : mean_dev / sd;
    }
  }
  return im;
}

/// Factor index each live latent is assigned to (column argmax, first on
/// ties); -1 for dead latents.
inline std::vector<int> assignment(const InfluenceMatrix& im) {
  std::vector<int> a(im.latents(), -1);
  for (std::size_t i = 0; i < im.latents(); ++i) {
    if (im.dead[i]) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < im.factors(); ++k)
      if (im.m(k, i) > im.m(best, i)) best = k;
    a[i] = static_cast<int>(best);
  }
  return a;
}

namespace detail {
inline void check_live(const InfluenceMatrix& im, const char* what) {
  if (im.dead.size() != im.latents()) throw ShapeError(std::string(what) + ": dead mask has wrong size");
  for (double v : im.m.a)
    if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError(std::string(what) + ": negative or non-finite influence");
  if (im.live() == 0) throw Error(std::string(what) + ": every latent is dead");
}
}  // namespace detail

/// Mean over live latents of 1 - (off-assignment mass / total mass).
inline double irs(const InfluenceMatrix& im) {
  detail::check_live(im, "irs");
  const auto a = assignment(im);
  double s = 0.0;
  for (std::size_t i = 0; i < im.latents(); ++i) {
    if (a[i] < 0) continue;
    double total = 0.0;
    for (std::size_t k = 0; k < im.factors(); ++k) total += im.m(k, i);
    s += 1.0 - (total - im.m(static_cast<std::size_t>(a[i]), i)) / (total + 1e-12);
  }
  return s / static_cast<double>(im.live());
}

/// 1 - mean over live latents of second-largest / largest influence. A live
/// latent with no influence at all counts as fully confounded (ratio 1).
inline double uc(const InfluenceMatrix& im) {
  detail::check_live(im, "uc");
  double s = 0.0;
  for (std::size_t i = 0; i < im.latents(); ++i) {
    if (im.dead[i]) continue;
    double first = 0.0, second = 0.0;
    for (std::size_t k = 0; k < im.factors(); ++k) {
      const double v = im.m(k, i);
      if (v > first) {
        second = first;
        first = v;
      } else if (v > second) {
        second = v;
      }
    }
    s += first > 0.0 ? second / first : 1.0;
  }
  return 1.0 - s / static_cast<double>(im.live());
}

struct CgResult {
  double value = 0.0;
  std::vector<double> per_factor;  ///< NaN where skipped
  std::vector<std::size_t> skipped;
};

/// Per factor k with assigned latents I_k: re-draw every factor except k and
/// measure the mean |change| of z_{I_k}, relative to the change when every
/// factor is re-drawn. CG_k = 1 - min(1, ratio); CG = mean over scored k.
inline CgResult cg(const Encoder& enc, const std::vector<int>& assign, const datagen::GenSpec& spec,
                   const ProbeSettings& s) {
  const std::size_t kf = spec.factors.size();
  std::vector<std::vector<std::size_t>> groups(kf);
  for (std::size_t i = 0; i < assign.size(); ++i) {
    if (assign[i] < 0) continue;
    if (static_cast<std::size_t>(assign[i]) >= kf) throw Error("cg: assignment names an unknown factor");
    groups[static_cast<std::size_t>(assign[i])].push_back(i);
  }
  const detail::ProbeBuilder pb(spec, s);
  // Variants: for each factor, "all but k" re-drawn; last variant: all re-drawn.
  std::vector<double> dev(kf, 0.0), ref(kf, 0.0);
  pb.run(
      enc, kf + 1,
      [&](Rng& rng, std::size_t c, const std::vector<std::uint16_t>& base, auto& var) {
        auto redraw = [&](std::size_t f) { return static_cast<std::uint16_t>(rng.categorical(spec.conditionals[c][f])); };
        for (std::size_t k = 0; k < kf; ++k) {
          var[k] = base;
          for (std::size_t f = 0; f < kf; ++f)
            if (f != k) var[k][f] = redraw(f);
        }
        for (std::size_t f = 0; f < kf; ++f) var[kf][f] = redraw(f);
      },
      [&](const Mat& z, std::size_t per, std::size_t n) {
        if (z.cols != assign.size()) throw ShapeError("cg: assignment covers " + std::to_string(assign.size()) +
                                                      " latents, encoder produced " + std::to_string(z.cols));
        for (std::size_t p = 0; p < n; ++p) {
          const std::size_t b = p * per;
          for (std::size_t k = 0; k < kf; ++k)
            for (std::size_t i : groups[k]) {
              dev[k] += std::abs(z(b + 1 + k, i) - z(b, i));
              ref[k] += std::abs(z(b + 1 + kf, i) - z(b, i));
            }
        }
      });
  CgResult r;
  r.per_factor.assign(kf, std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t k = 0; k < kf; ++k) {
    if (groups[k].empty()) {
      r.skipped.push_back(k);
      continue;
    }
    r.per_factor[k] = ref[k] > 0.0 ? 1.0 - std::min(1.0, dev[k] / ref[k]) : 1.0;
    sum += r.per_factor[k];
    ++scored;
  }
  if (scored == 0) throw Error("cg: no factor has an assigned latent");
  r.value = sum / static_cast<double>(scored);
  return r;
}

inline CgResult cg(const Encoder& enc, const InfluenceMatrix& im, const datagen::GenSpec& spec,
                   const ProbeSettings& s) {
  return cg(enc, assignment(im), spec, s);
}

}  // namespace cdisent::metrics
