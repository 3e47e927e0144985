#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <vector>

#include <json.hpp>

#include "cdisent/core/bytes.hpp"
#include "cdisent/core/random.hpp"
#include "cdisent/datagen/dataset.hpp"
#include "cdisent/models/cdvae.hpp"
#include "cdisent/ndiff/adam.hpp"

namespace cdisent::models {

struct EpochStats {
  std::size_t epoch = 0;
  LossBreakdown mean;  ///< batch-averaged terms
  std::size_t clamp_events = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  bool diverged = false;
  std::size_t diverged_epoch = 0;
};

/// Batch plan: floor(N / B) batches, the last absorbing the remainder; a set
/// smaller than B is one batch.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t b) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t nb = std::max<std::size_t>(1, n / b);
  for (std::size_t k = 0; k < nb; ++k) out.emplace_back(k * b, k + 1 == nb ? n : (k + 1) * b);
  return out;
}

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch Adam on `m`. Shuffle order per epoch comes from
/// derive_seed(seed, 1000 + epoch), noise from derive_seed(seed, 1). On a
/// non-finite loss or gradient the parameters of the last finite step are
/// kept and training stops with `diverged` set. Mixture models record the
/// training label frequencies in `config.label_prior`.
template <class T>
TrainResult train(Model<T>& m, const datagen::LabeledDataset& ds, const EpochCallback& on_epoch = {}) {
  const CdVaeConfig& cfg = m.config;
  cfg.validate();
  ds.validate();
  if (ds.size() == 0) throw Error("train: empty dataset");
  if (cfg.has_ioss() && ds.size() < kIossMinBatch)
    throw Error("train: ioss variants need at least " + std::to_string(kIossMinBatch) + " samples");
  if (cfg.has_pi() && ds.conf_card > cfg.heads())
    throw Error("train: dataset has " + std::to_string(ds.conf_card) + " confounder labels, model has " +
                std::to_string(cfg.heads()) + " components");
  if (cfg.conditional_input() && ds.conf_card > cfg.n_components)
    throw Error("train: dataset has " + std::to_string(ds.conf_card) + " confounder labels, model conditions on " +
                std::to_string(cfg.n_components));

  if (cfg.has_pi()) {
    std::vector<double> prior(cfg.heads(), 0.0);
    for (std::uint16_t c : ds.c) prior[c] += 1.0;
    for (double& p : prior) p /= static_cast<double>(ds.size());
    m.config.label_prior = std::move(prior);
  }

  ndiff::AdamState<T> opt(m.params, cfg.adam);
  Rng noise_rng(derive_seed(cfg.seed, 1));
  TrainResult res;
  std::vector<std::size_t> order(ds.size());
  const auto ranges = batch_ranges(ds.size(), cfg.batch_size);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 1000 + epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    EpochStats st;
    st.epoch = epoch;
    std::size_t seen = 0;
    for (const auto& [lo, hi] : ranges) {
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const Batch<T> batch = make_batch<T>(ds, idx, cfg);
      const Noise<T> noise = draw_noise<T>(noise_rng, cfg, idx.size());
      LossBreakdown lb;
      bool finite = true;
      try {
        Graph<T> g;
        const LossVars<T> l = loss_graph(g, cfg, m.params, batch, noise);
        lb = breakdown(l, cfg);
        g.backward(l.total, m.params);
        st.clamp_events += g.clamp_events();
        for (const auto& e : m.params)
          for (T v : e.grad.data())
            if (!std::isfinite(static_cast<double>(v))) finite = false;
        if (!std::isfinite(lb.total)) finite = false;
      } catch (const NumericError&) {
        finite = false;
      }
      if (!finite) {
        res.diverged = true;
        res.diverged_epoch = epoch;
        return res;
      }
      // Finite gradients keep the Adam update finite.
      ndiff::adam_step(m.params, opt);
      const double w = static_cast<double>(idx.size());
      st.mean.total += w * lb.total;
      st.mean.rec += w * lb.rec;
      st.mean.cls += w * lb.cls;
      st.mean.kl += w * lb.kl;
      st.mean.ioss += w * lb.ioss;
      st.mean.w_rec = lb.w_rec;
      st.mean.w_cls = lb.w_cls;
      st.mean.w_kl = lb.w_kl;
      st.mean.w_ioss = lb.w_ioss;
      seen += idx.size();
    }
    const double inv = 1.0 / static_cast<double>(seen);
    st.mean.total *= inv;
    st.mean.rec *= inv;
    st.mean.cls *= inv;
    st.mean.kl *= inv;
    st.mean.ioss *= inv;
    res.history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return res;
}

/// Evaluation-mode mean squared reconstruction error over the dataset.
template <class T>
double recon_error(const Model<T>& m, const datagen::LabeledDataset& ds) {
  const Matrix r = reconstruct(m, ds);
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto o = ds.obs(i);
    for (std::size_t j = 0; j < r.cols; ++j) {
      const double e = r(i, j) - static_cast<double>(o[j]);
      s += e * e;
    }
  }
  return s / static_cast<double>(ds.size() * r.cols);
}

inline nlohmann::json to_json(const LossBreakdown& b) {
  return {{"total", b.total}, {"rec", b.rec}, {"cls", b.cls}, {"kl", b.kl}, {"ioss", b.ioss}};
}

inline nlohmann::json to_json(const TrainResult& r) {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& e : r.history) {
    nlohmann::json j = to_json(e.mean);
    j["epoch"] = e.epoch;
    j["clamp_events"] = e.clamp_events;
    h.push_back(j);
  }
  return {{"history", h}, {"diverged", r.diverged}, {"diverged_epoch", r.diverged_epoch}};
}

// Checkpoint directory: model.cdpt parameters plus model.json with the config
// echo under "config" and, when given, the training history.

template <class T>
void save_model(const Model<T>& m, const std::filesystem::path& dir, const TrainResult* trained = nullptr) {
  std::filesystem::create_directories(dir);
  ndiff::save_checkpoint(m.params, dir / "model.cdpt");
  nlohmann::json j{{"config", to_json(m.config)}};
  if (trained) {
    j["epochs_run"] = trained->history.size();
    j["training"] = to_json(*trained);
  }
  bytes::write_file_atomic(dir / "model.json", j.dump(2) + "\n");
}

template <class T>
Model<T> load_model(const std::filesystem::path& dir) {
  const std::string text = bytes::read_file_bytes(dir / "model.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
  if (!j.contains("config")) throw FormatError((dir / "model.json").string() + ": missing \"config\"");
  Model<T> m{config_from_json(j.at("config")), ndiff::load_checkpoint<T>(dir / "model.cdpt")};
  // Shape check against the architecture the config implies.
  const Model<T> fresh = make_model<T>(m.config);
  if (fresh.params.size() != m.params.size())
    throw FormatError(dir.string() + ": checkpoint has " + std::to_string(m.params.size()) +
                      " tensors, config implies " + std::to_string(fresh.params.size()));
  for (const auto& e : fresh.params)
    if (!m.params.contains(e.name) || m.params.value(e.name).shape() != e.value.shape())
      throw FormatError(dir.string() + ": parameter '" + e.name + "' missing or misshaped");
  return m;
}

}  // namespace cdisent::models
