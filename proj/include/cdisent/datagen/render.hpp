#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cdisent/core/error.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/datagen/spec.hpp"

namespace cdisent::datagen {

inline constexpr float kBackground = 0.5f;

namespace detail {

inline std::array<float, 3> hue_rgb(double h) {
  // HSV with full saturation and value.
  h = h - std::floor(h);
  const double x = h * 6.0;
  const int sector = static_cast<int>(x) % 6;
  const double f = x - std::floor(x);
  const float q = static_cast<float>(1.0 - f), t = static_cast<float>(f);
  switch (sector) {
    case 0: return {1.f, t, 0.f};
    case 1: return {q, 1.f, 0.f};
    case 2: return {0.f, 1.f, t};
    case 3: return {0.f, q, 1.f};
    case 4: return {t, 0.f, 1.f};
    default: return {1.f, 0.f, q};
  }
}

/// dx, dy in units of the shape radius.
inline bool inside_shape(std::size_t shape, double dx, double dy) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  switch (shape) {
    case 0: return ax <= 1.0 && ay <= 1.0;
    case 1: return dx * dx + dy * dy <= 1.0;
    case 2: return dy <= 1.0 && ax <= (dy + 1.0) * 0.5;
    case 3: return ax + ay <= 1.0;
    default: return (ax <= 1.0 / 3.0 && ay <= 1.0) || (ay <= 1.0 / 3.0 && ax <= 1.0);
  }
}

inline double level(std::size_t v, std::size_t card, double lo, double hi) {
  if (card <= 1) return 0.5 * (lo + hi);
  return lo + (hi - lo) * static_cast<double>(v) / static_cast<double>(card - 1);
}

}  // namespace detail

/// Renders factor assignments for one GenSpec. Holds the tabular mixing
/// matrix so it is built once.
class Renderer {
 public:
  explicit Renderer(const GenSpec& spec) : spec_(spec) {
    spec_.validate();
    const auto& o = spec_.observation;
    if (o.mode == ObsMode::Tabular) {
      const std::size_t cols = spec_.factors.total_values();
      mixing_.assign(o.dim * cols, 0.0);
      if (o.identity_mixing) {
        for (std::size_t i = 0; i < o.dim; ++i) mixing_[i * cols + i] = 1.0;
      } else {
        Rng rng(o.mixing_seed);
        for (double& a : mixing_) a = rng.normal();
      }
      std::size_t col = 0;
      for (std::size_t k = 0; k < spec_.factors.size(); ++k) {
        const double gain = o.factor_gain.empty() ? 1.0 : o.factor_gain[k];
        for (std::size_t v = 0; v < spec_.factors.card(k); ++v, ++col)
          for (std::size_t i = 0; i < o.dim; ++i) mixing_[i * cols + col] *= gain;
      }
    } else {
      for (std::size_t k = 0; k < spec_.factors.size(); ++k) {
        const auto& name = spec_.factors.factors[k].name;
        if (name == "shape") shape_ = k;
        else if (name == "hue") hue_ = k;
        else if (name == "size") size_ = k;
        else if (name == "posx") posx_ = k;
        else if (name == "posy") posy_ = k;
      }
    }
  }

  const GenSpec& spec() const noexcept { return spec_; }

  /// Tabular mixing matrix A, row-major [dim, sum of cardinalities].
  const std::vector<double>& mixing() const noexcept { return mixing_; }

  void render_into(std::span<const std::uint16_t> g, std::uint64_t seed, std::span<float> out) const {
    if (g.size() != spec_.factors.size()) throw ShapeError("render: assignment has wrong number of factors");
    for (std::size_t k = 0; k < g.size(); ++k)
      if (g[k] >= spec_.factors.card(k))
        throw Error("render: value " + std::to_string(g[k]) + " out of range for factor '" +
                    spec_.factors.factors[k].name + "'");
    if (out.size() != spec_.obs_dim()) throw ShapeError("render: output buffer has wrong size");
    if (spec_.observation.mode == ObsMode::Tabular) render_tabular(g, out);
    else render_image(g, out);
    const double sigma = spec_.observation.noise;
    if (sigma > 0.0) {
      Rng rng(seed);
      for (float& v : out) v += static_cast<float>(sigma * rng.normal());
    }
  }

  std::vector<float> render(std::span<const std::uint16_t> g, std::uint64_t seed) const {
    std::vector<float> out(spec_.obs_dim());
    render_into(g, seed, out);
    return out;
  }

  /// Per-pixel shape coverage in [0, 1] (image mode), before noise.
  std::vector<float> coverage(std::span<const std::uint16_t> g) const {
    const auto& o = spec_.observation;
    if (o.mode != ObsMode::Image) throw Error("coverage: tabular spec has no image");
    const std::size_t h = o.height, w = o.width;
    const double side = static_cast<double>(std::min(h, w));
    auto value = [&](std::size_t idx) -> std::size_t { return idx == kNone ? 0 : g[idx]; };
    auto card = [&](std::size_t idx) -> std::size_t { return idx == kNone ? 1 : spec_.factors.card(idx); };
    const double r = side * detail::level(value(size_), card(size_), 0.16, 0.32);
    const double cx = static_cast<double>(w) * detail::level(value(posx_), card(posx_), 0.32, 0.68);
    const double cy = static_cast<double>(h) * detail::level(value(posy_), card(posy_), 0.32, 0.68);
    const std::size_t shape = value(shape_);
    constexpr int kSub = 4;
    std::vector<float> cov(h * w, 0.f);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        int hits = 0;
        for (int sy = 0; sy < kSub; ++sy)
          for (int sx = 0; sx < kSub; ++sx) {
            const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
            const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
            hits += detail::inside_shape(shape, (px - cx) / r, (py - cy) / r) ? 1 : 0;
          }
        cov[y * w + x] = static_cast<float>(hits) / static_cast<float>(kSub * kSub);
      }
    return cov;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  void render_tabular(std::span<const std::uint16_t> g, std::span<float> out) const {
    const std::size_t cols = spec_.factors.total_values();
    std::vector<std::size_t> active;
    std::size_t offset = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
      active.push_back(offset + g[k]);
      offset += spec_.factors.card(k);
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      double s = 0.0;
      for (std::size_t col : active) s += mixing_[i * cols + col];
      out[i] = static_cast<float>(s);
    }
  }

  void render_image(std::span<const std::uint16_t> g, std::span<float> out) const {
    const auto cov = coverage(g);
    const std::array<float, 3> color =
        hue_ == kNone ? std::array<float, 3>{1.f, 0.f, 0.f}
                      : detail::hue_rgb(static_cast<double>(g[hue_]) / static_cast<double>(spec_.factors.card(hue_)));
    for (std::size_t p = 0; p < cov.size(); ++p)
      for (std::size_t ch = 0; ch < 3; ++ch)
        out[p * 3 + ch] = kBackground * (1.f - cov[p]) + color[ch] * cov[p];
  }

  GenSpec spec_;
  std::vector<double> mixing_;
  std::size_t shape_ = kNone, hue_ = kNone, size_ = kNone, posx_ = kNone, posy_ = kNone;
};

inline std::vector<float> render(const GenSpec& spec, std::span<const std::uint16_t> g, std::uint64_t seed) {
  return Renderer(spec).render(g, seed);
}

}  // namespace cdisent::datagen
