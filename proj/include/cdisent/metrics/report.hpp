#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdisent/core/hash.hpp"
#include "cdisent/datagen/dataset.hpp"
#include "cdisent/metrics/dci.hpp"
#include "cdisent/metrics/influence.hpp"
#include "cdisent/metrics/ioss.hpp"
#include "cdisent/metrics/mic.hpp"
#include "cdisent/models/train.hpp"

namespace cdisent::metrics {

struct EvalSettings {
  std::size_t probes = 2000;
  std::uint64_t seed = 0;
  std::size_t mic_samples = 5000;  ///< leading samples used for MIC/TIC
  IossSettings ioss{};
  std::optional<std::uint16_t> probe_label;

  nlohmann::json to_json() const {
    nlohmann::json j{{"probes", probes},
                     {"seed", seed},
                     {"mic_samples", mic_samples},
                     {"ioss_resolution", ioss.resolution},
                     {"ioss_quantile", ioss.quantile},
                     {"ioss_random_pairs", ioss.random_pairs},
                     {"ridge_lambda", kRidgeLambda},
                     {"mic_budget_exponent", MicSettings{}.budget_exponent},
                     {"mic_max_bins", MicSettings{}.max_bins}};
    j["probe_label"] = probe_label ? nlohmann::json(*probe_label) : nlohmann::json(nullptr);
    return j;
  }

  std::string hash() const { return hex64(fnv1a(to_json().dump())); }
};

struct MetricReport {
  std::optional<double> recon;     ///< decoder head only
  std::optional<double> accuracy;  ///< classifier head only
  double d = 0, ioss = 0, irs = 0, uc = 0, cg = 0;
  linalg::Mat mic, tic;  ///< K x D
  std::vector<std::string> factor_names;
  std::vector<std::size_t> cg_skipped;
  std::vector<std::size_t> dead_latents;
  std::size_t n = 0;
  EvalSettings settings;

  double mic_mean() const { return 100.0 * mean_of(mic); }
  double tic_mean() const { return mean_of(tic); }

  static double mean_of(const linalg::Mat& m) {
    if (m.a.empty()) return 0.0;
    double s = 0.0;
    for (double v : m.a) s += v;
    return s / static_cast<double>(m.a.size());
  }
};

inline const char* kReportCsvHeader = "recon,d,ioss,irs,uc,cg,mic_mean,tic_mean,settings_hash";

inline std::string to_csv_row(const MetricReport& r) {
  std::ostringstream os;
  os.precision(10);
  if (r.recon) os << *r.recon;
  os << ',' << r.d << ',' << r.ioss << ',' << r.irs << ',' << r.uc << ',' << r.cg << ',' << r.mic_mean() << ','
     << r.tic_mean() << ',' << r.settings.hash();
  return os.str();
}

inline nlohmann::json to_json(const MetricReport& r) {
  auto mat = [](const linalg::Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
      rows.push_back(row);
    }
    return rows;
  };
  nlohmann::json j{{"d", r.d},
                   {"ioss", r.ioss},
                   {"irs", r.irs},
                   {"uc", r.uc},
                   {"cg", r.cg},
                   {"approx", {"uc", "cg"}},
                   {"mic", mat(r.mic)},
                   {"tic", mat(r.tic)},
                   {"mic_mean", r.mic_mean()},
                   {"tic_mean", r.tic_mean()},
                   {"factors", r.factor_names},
                   {"cg_skipped_factors", r.cg_skipped},
                   {"dead_latents", r.dead_latents},
                   {"n", r.n},
                   {"settings", r.settings.to_json()},
                   {"settings_hash", r.settings.hash()}};
  j["recon"] = r.recon ? nlohmann::json(*r.recon) : nlohmann::json(nullptr);
  if (r.accuracy) j["accuracy"] = *r.accuracy;
  return j;
}

/// Every metric for one encoder. `probe_spec` drives the interventional
/// probes (influence, CG); `eval` supplies the latent sample for D, IOSS and
/// MIC/TIC. Dead latents are left out of IOSS, whose support would be empty.
inline MetricReport evaluate(const Encoder& enc, const datagen::LabeledDataset& eval,
                             const datagen::GenSpec& probe_spec, const EvalSettings& s) {
  MetricReport r;
  r.settings = s;
  r.n = eval.size();
  r.factor_names = eval.factor_names;
  const Mat z = enc(eval);
  if (z.rows != eval.size()) throw ShapeError("evaluate: encoder output rows differ from dataset size");

  const ProbeSettings ps{.probes = s.probes, .seed = derive_seed(s.seed, 1), .label = s.probe_label};
  const InfluenceMatrix im = influence(enc, probe_spec, ps);
  r.irs = irs(im);
  r.uc = uc(im);
  const CgResult c = cg(enc, im, probe_spec, ProbeSettings{.probes = s.probes, .seed = derive_seed(s.seed, 2), .label = s.probe_label});
  r.cg = c.value;
  r.cg_skipped = c.skipped;

  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < z.cols; ++i) {
    if (im.dead[i]) r.dead_latents.push_back(i);
    // The probe regime and the evaluation set can differ; judge IOSS columns
    // on the evaluation sample itself.
    double lo = z(0, i), hi = z(0, i);
    for (std::size_t k = 1; k < z.rows; ++k) lo = std::min(lo, z(k, i)), hi = std::max(hi, z(k, i));
    if (hi - lo > kDeadStd) live.push_back(i);
  }
  if (live.size() >= 2) {
    Mat zl(z.rows, live.size());
    for (std::size_t k = 0; k < z.rows; ++k)
      for (std::size_t j = 0; j < live.size(); ++j) zl(k, j) = z(k, live[j]);
    r.ioss = ioss(zl, s.ioss);
  } else {
    r.ioss = 1.0;
  }
  r.d = dci_d(z, eval);

  const std::size_t nm = std::min(s.mic_samples, eval.size());
  r.mic = Mat(eval.n_factors(), z.cols);
  r.tic = Mat(eval.n_factors(), z.cols);
  std::vector<double> xf(nm), yl(nm);
  for (std::size_t k = 0; k < eval.n_factors(); ++k) {
    for (std::size_t i = 0; i < nm; ++i) xf[i] = eval.factor(i, k);
    for (std::size_t l = 0; l < z.cols; ++l) {
      for (std::size_t i = 0; i < nm; ++i) yl[i] = z(i, l);
      const MicResult m = mic(xf, yl);
      r.mic(k, l) = m.mic;
      r.tic(k, l) = m.tic;
    }
  }
  return r;
}

template <class T>
Encoder model_encoder(const models::Model<T>& m) {
  return [&m](const datagen::LabeledDataset& ds) { return models::embed(m, ds); };
}

/// Mean per-feature squared reconstruction error; decoder models only.
template <class T>
double recon_error(const models::Model<T>& m, const datagen::LabeledDataset& ds) {
  if (m.config.head != models::Head::Decoder)
    throw Error("recon_error: model has a " + models::to_string(m.config.head) + " head");
  return models::recon_error(m, ds);
}

template <class T>
MetricReport evaluate(const models::Model<T>& m, const datagen::LabeledDataset& eval,
                      const datagen::GenSpec& probe_spec, const EvalSettings& s) {
  MetricReport r = evaluate(model_encoder(m), eval, probe_spec, s);
  if (m.config.head == models::Head::Decoder) r.recon = models::recon_error(m, eval);
  else r.accuracy = models::accuracy(m, eval);
  return r;
}

}  // namespace cdisent::metrics
