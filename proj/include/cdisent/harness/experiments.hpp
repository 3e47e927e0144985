#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cdisent/core/bytes.hpp"
#include "cdisent/core/stats.hpp"
#include "cdisent/datagen/dataset.hpp"
#include "cdisent/harness/config.hpp"
#include "cdisent/metrics/report.hpp"
#include "cdisent/models/train.hpp"

namespace cdisent::harness {

/// One trained model and its numbers. `values` keeps column order.
struct RunRecord {
  std::string experiment;
  std::string model;
  std::string choice;  ///< ablate-c label set; empty otherwise
  std::optional<double> severity;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<std::pair<std::string, double>> values;
  std::string config_hash;
  std::string run_hash;
  double seconds = 0.0;  ///< wall clock; kept out of the reports

  std::optional<double> get(const std::string& key) const {
    for (const auto& [k, v] : values)
      if (k == key) return v;
    return std::nullopt;
  }
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation
};

struct Aggregate {
  std::string model, choice;
  std::optional<double> severity;
  std::size_t n_ok = 0, n_failed = 0;
  std::vector<std::pair<std::string, MetricSummary>> metrics;
};

/// A named ordering that must hold in at least `required` of `total` seeds.
/// Soft checks are logged and never fail a run.
struct TrendCheck {
  std::string name;
  std::size_t passes = 0, total = 0, required = 0;
  bool soft = false;
  bool ok = false;
  std::string detail;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<RunRecord> records;
  std::vector<Aggregate> aggregates;
  std::vector<TrendCheck> checks;

  bool any_failed() const {
    for (const auto& r : records)
      if (!r.ok) return true;
    return false;
  }
  bool checks_ok() const {
    for (const auto& c : checks)
      if (!c.soft && !c.ok) return false;
    return true;
  }
};

/// Columns emitted per experiment kind.
inline std::vector<std::string> metric_columns(Kind k) {
  switch (k) {
    case Kind::Ood: return {"acc_s", "acc_t", "drop", "acc_s_posterior", "acc_t_posterior", "epochs_run"};
    case Kind::AblateC: return {"acc_s", "acc_t", "drop", "acc_s_posterior", "acc_t_posterior", "irs", "epochs_run"};
    case Kind::Compare: return {"recon", "d", "ioss", "irs", "uc", "cg", "mic_mean", "tic_mean", "epochs_run"};
    default: return {};
  }
}

/// At least 4 of 5 seeds, scaled: ceil(0.8 n).
inline std::size_t required_seeds(std::size_t n) { return (4 * n + 4) / 5; }

namespace detail {

inline std::uint64_t severity_key(double s) { return static_cast<std::uint64_t>(std::llround(s * 1e6)); }

inline std::uint64_t data_seed(Kind k, std::uint64_t seed, std::optional<double> severity) {
  const std::uint64_t base = derive_seed(seed, k == Kind::Compare ? 200 : 100);
  return severity ? derive_seed(base, severity_key(*severity)) : base;
}

/// Runs `n` jobs on up to `threads` workers; job i writes slot i only.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
}

inline std::size_t input_dim(const datagen::GenSpec& spec) {
  std::size_t d = 1;
  for (std::size_t s : spec.obs_shape()) d *= s;
  return d;
}

/// Fills the dataset-dependent fields of a model config.
inline models::CdVaeConfig fit_config(models::CdVaeConfig c, const datagen::GenSpec& spec,
                                      const datagen::LabeledDataset& train, bool classifier, std::uint64_t seed) {
  c.input_dim = input_dim(spec);
  c.n_components = train.conf_card;
  c.seed = seed;
  if (classifier) {
    c.head = models::Head::Classifier;
    if (c.task_factor >= spec.factors.factors.size()) throw ConfigError("task_factor out of range");
    c.n_classes = spec.factors.card(c.task_factor);
  } else {
    c.head = models::Head::Decoder;
  }
  return c;
}

struct Job {
  const ModelEntry* entry;
  std::string choice;
  std::optional<double> severity;
  std::uint64_t seed;
  bool vae_reference = false;
};

inline std::string run_hash(const std::string& config_hash, const Job& j) {
  std::ostringstream os;
  os << config_hash << '|' << j.entry->name << (j.vae_reference ? "/vae" : "") << '|' << j.choice << '|'
     << (j.severity ? std::to_string(severity_key(*j.severity)) : "-") << '|' << j.seed;
  return hex64(fnv1a(os.str()));
}

inline datagen::LabeledDataset relabel(const datagen::LabeledDataset& ds, const std::string& choice, std::size_t n_conf,
                                       std::size_t groups, std::uint64_t seed) {
  if (choice == "empty") return datagen::with_constant_label(ds);
  if (choice == "partial") return datagen::with_merged_labels(ds, n_conf, groups);
  if (choice == "superset") return datagen::with_refined_labels(ds, seed);
  return ds;
}

inline std::optional<std::filesystem::path> run_dir(const std::optional<std::filesystem::path>& out,
                                                    const std::string& hash) {
  if (!out) return std::nullopt;
  return *out / "runs" / hash;
}

/// Trains, writes the checkpoint, and returns the model. Divergence throws.
inline models::Model<float> fit(const models::CdVaeConfig& cfg, const datagen::LabeledDataset& train,
                                const std::optional<std::filesystem::path>& dir, double& epochs_run) {
  auto m = models::make_model<float>(cfg);
  const models::TrainResult tr = models::train(m, train);
  epochs_run = static_cast<double>(tr.history.size());
  if (dir) models::save_model(m, *dir, &tr);
  if (tr.diverged) throw NumericError("training diverged in epoch " + std::to_string(tr.diverged_epoch));
  return m;
}

inline void classification_run(const ExperimentConfig& cfg, const Job& job, RunRecord& rec,
                               const std::optional<std::filesystem::path>& out) {
  const datagen::GenSpec spec = cfg.spec();
  const std::size_t n_conf = spec.n_confounders();
  const std::uint64_t ds_seed = data_seed(cfg.kind, job.seed, job.severity);
  auto [train, target] = datagen::shifted_split(spec, *job.severity, cfg.n_train, cfg.n_target, ds_seed);
  auto source = datagen::shifted_split(spec, *job.severity, cfg.n_source_test, 1, derive_seed(ds_seed, 1)).first;
  const std::uint64_t refine_seed = derive_seed(ds_seed, 2);
  train = relabel(train, job.choice, n_conf, cfg.partial_groups, refine_seed);

  models::CdVaeConfig mc = cfg.model_config(*job.entry);
  if (job.vae_reference) mc.variant = models::Variant::Vae;
  mc = fit_config(mc, spec, train, true, job.seed);
  double epochs = 0.0;
  const auto m = fit(mc, train, run_dir(out, rec.run_hash), epochs);
  const double acc_s = models::accuracy(m, source), acc_t = models::accuracy(m, target);
  rec.values = {{"acc_s", acc_s}, {"acc_t", acc_t}, {"drop", acc_s - acc_t}};
  if (m.config.has_pi() && m.config.eval_routing == models::Routing::Prior) {
    // Same weights, routed through the pi head instead, for comparison.
    models::Model<float> post = m;
    post.config.eval_routing = models::Routing::Posterior;
    rec.values.emplace_back("acc_s_posterior", models::accuracy(post, source));
    rec.values.emplace_back("acc_t_posterior", models::accuracy(post, target));
  }
  if (cfg.kind == Kind::AblateC) {
    metrics::ProbeSettings ps{.probes = cfg.eval.probes, .seed = derive_seed(cfg.eval.seed, 1)};
    rec.values.emplace_back("irs", metrics::irs(metrics::influence(metrics::model_encoder(m), spec.decorrelated(), ps)));
  }
  rec.values.emplace_back("epochs_run", epochs);
}

inline void compare_run(const ExperimentConfig& cfg, const Job& job, RunRecord& rec,
                        const std::optional<std::filesystem::path>& out) {
  const datagen::GenSpec spec = cfg.spec();
  const std::uint64_t ds_seed = data_seed(cfg.kind, job.seed, std::nullopt);
  const auto train = datagen::sample_dataset(spec, cfg.n_train, derive_seed(ds_seed, 0));
  const auto eval = datagen::sample_dataset(spec, cfg.n_eval, derive_seed(ds_seed, 1));
  const models::CdVaeConfig mc = fit_config(cfg.model_config(*job.entry), spec, train, false, job.seed);
  double epochs = 0.0;
  const auto m = fit(mc, train, run_dir(out, rec.run_hash), epochs);
  const metrics::MetricReport r = metrics::evaluate(m, eval, spec, cfg.eval);
  rec.values = {{"recon", *r.recon}, {"d", r.d},   {"ioss", r.ioss},         {"irs", r.irs},
                {"uc", r.uc},        {"cg", r.cg}, {"mic_mean", r.mic_mean()}, {"tic_mean", r.tic_mean()},
                {"epochs_run", epochs}};
  if (out) bytes::write_file_atomic(*run_dir(out, rec.run_hash) / "metrics.json", metrics::to_json(r).dump(2) + "\n");
}

inline std::vector<Job> plan(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  switch (cfg.kind) {
    case Kind::Ood:
      for (double s : cfg.severities)
        for (std::uint64_t seed : cfg.seeds)
          for (const auto& m : cfg.models) jobs.push_back({&m, "", s, seed});
      break;
    case Kind::AblateC:
      for (double s : cfg.severities)
        for (std::uint64_t seed : cfg.seeds) {
          for (const char* choice : {"empty", "partial", "full", "superset"})
            jobs.push_back({&cfg.models.front(), choice, s, seed});
          jobs.push_back({&cfg.models.front(), "full", s, seed, true});
        }
      break;
    case Kind::Compare:
      for (std::uint64_t seed : cfg.seeds)
        for (const auto& m : cfg.models) jobs.push_back({&m, "", std::nullopt, seed});
      break;
    default: throw ConfigError("experiment kind '" + to_string(cfg.kind) + "' is not a grid experiment");
  }
  return jobs;
}

inline std::string severity_label(const std::optional<double>& s) {
  return s ? nlohmann::json(*s).dump() : std::string("-");
}

}  // namespace detail

/// Mean and sample std per (model, choice, severity), over successful runs.
inline std::vector<Aggregate> aggregate(const std::vector<RunRecord>& records, const std::vector<std::string>& columns) {
  std::vector<Aggregate> out;
  auto find = [&](const RunRecord& r) -> Aggregate& {
    for (auto& a : out)
      if (a.model == r.model && a.choice == r.choice && a.severity == r.severity) return a;
    out.push_back({r.model, r.choice, r.severity, 0, 0, {}});
    return out.back();
  };
  std::map<std::tuple<std::string, std::string, std::string>, std::map<std::string, std::vector<double>>> values;
  for (const auto& r : records) {
    Aggregate& a = find(r);
    if (!r.ok) {
      ++a.n_failed;
      continue;
    }
    ++a.n_ok;
    for (const auto& [k, v] : r.values) values[{r.model, r.choice, detail::severity_label(r.severity)}][k].push_back(v);
  }
  for (auto& a : out) {
    const auto it = values.find({a.model, a.choice, detail::severity_label(a.severity)});
    if (it == values.end()) continue;
    for (const auto& col : columns) {
      const auto v = it->second.find(col);
      if (v == it->second.end()) continue;
      a.metrics.emplace_back(col, MetricSummary{stats::mean(v->second), stats::sample_std(v->second)});
    }
  }
  return out;
}

namespace detail {

/// Per-seed values of `metric` for the successful run matching the filters.
inline std::map<std::uint64_t, double> per_seed(const std::vector<RunRecord>& recs, const std::string& model,
                                                const std::string& choice, const std::optional<double>& severity,
                                                const std::string& metric) {
  std::map<std::uint64_t, double> out;
  for (const auto& r : recs)
    if (r.ok && r.model == model && r.choice == choice && r.severity == severity)
      if (const auto v = r.get(metric)) out[r.seed] = *v;
  return out;
}

inline bool has_model(const ExperimentConfig& cfg, const std::string& name) {
  for (const auto& m : cfg.models)
    if (m.name == name) return true;
  return false;
}

/// Seeds where cmp(a, b) holds; a seed missing on either side counts as a miss.
template <class Cmp>
TrendCheck pairwise(std::string name, const std::map<std::uint64_t, double>& a, const std::map<std::uint64_t, double>& b,
                    std::size_t n_seeds, Cmp cmp) {
  TrendCheck c;
  c.name = std::move(name);
  c.total = n_seeds;
  c.required = required_seeds(n_seeds);
  for (const auto& [seed, va] : a) {
    const auto it = b.find(seed);
    if (it != b.end() && cmp(va, it->second)) ++c.passes;
  }
  c.ok = c.passes >= c.required;
  c.detail = std::to_string(c.passes) + "/" + std::to_string(c.total) + " seeds";
  return c;
}

inline double mean_of(const std::map<std::uint64_t, double>& m) {
  std::vector<double> v;
  for (const auto& [s, x] : m) v.push_back(x);
  return v.empty() ? std::nan("") : stats::mean(v);
}

inline std::string fmt(double v) { return nlohmann::json(v).dump(); }

inline std::vector<TrendCheck> trend_checks(const ExperimentResult& res) {
  const auto& cfg = res.config;
  const auto& recs = res.records;
  const std::size_t n = cfg.seeds.size();
  std::vector<TrendCheck> out;
  if (cfg.kind == Kind::Ood && has_model(cfg, "cdvae") && has_model(cfg, "beta-vae")) {
    for (double s : cfg.severities)
      out.push_back(pairwise("drop(cdvae) <= drop(beta-vae) @ severity " + fmt(s),
                             per_seed(recs, "cdvae", "", s, "drop"), per_seed(recs, "beta-vae", "", s, "drop"), n,
                             [](double a, double b) { return a <= b; }));
  }
  if (cfg.kind == Kind::AblateC) {
    const std::string& m = cfg.models.front().name;
    for (double s : cfg.severities) {
      const std::string at = " @ severity " + fmt(s);
      const auto full = per_seed(recs, m, "full", s, "acc_t");
      const auto partial = per_seed(recs, m, "partial", s, "acc_t");
      const auto empty = per_seed(recs, m, "empty", s, "acc_t");
      const auto super = per_seed(recs, m, "superset", s, "acc_t");
      auto gt = [](double a, double b) { return a > b; };
      out.push_back(pairwise("acc_t(full) > acc_t(partial)" + at, full, partial, n, gt));
      out.push_back(pairwise("acc_t(partial) > acc_t(empty)" + at, partial, empty, n, gt));
      TrendCheck order{"mean acc_t: full > partial > empty" + at};
      order.total = order.required = 1;
      order.ok = mean_of(full) > mean_of(partial) && mean_of(partial) > mean_of(empty);
      order.passes = order.ok ? 1 : 0;
      order.detail = fmt(mean_of(full)) + " / " + fmt(mean_of(partial)) + " / " + fmt(mean_of(empty));
      out.push_back(order);
      TrendCheck near{"mean acc_t(superset) within 0.01 of full" + at};
      near.total = near.required = 1;
      const double gap = std::abs(mean_of(super) - mean_of(full));
      near.ok = gap <= 0.01;
      near.passes = near.ok ? 1 : 0;
      near.detail = "gap " + fmt(gap);
      out.push_back(near);
    }
  }
  if (cfg.kind == Kind::Compare && has_model(cfg, "cdvae") && has_model(cfg, "vae")) {
    out.push_back(pairwise("ioss(cdvae) < ioss(vae)", per_seed(recs, "cdvae", "", std::nullopt, "ioss"),
                           per_seed(recs, "vae", "", std::nullopt, "ioss"), n, [](double a, double b) { return a < b; }));
    out.push_back(pairwise("irs(cdvae) >= irs(vae)", per_seed(recs, "cdvae", "", std::nullopt, "irs"),
                           per_seed(recs, "vae", "", std::nullopt, "irs"), n, [](double a, double b) { return a >= b; }));
    // Logged only: on confounded data a causally disentangled code should
    // not win on D.
    TrendCheck soft{"mean d(cdvae) not the highest"};
    soft.soft = true;
    soft.total = soft.required = 1;
    const double mine = mean_of(per_seed(recs, "cdvae", "", std::nullopt, "d"));
    double best = -1.0;
    for (const auto& e : cfg.models)
      if (e.name != "cdvae") best = std::max(best, mean_of(per_seed(recs, e.name, "", std::nullopt, "d")));
    soft.ok = mine < best;
    soft.passes = soft.ok ? 1 : 0;
    soft.detail = "cdvae " + fmt(mine) + ", best other " + fmt(best);
    out.push_back(soft);
  }
  return out;
}

}  // namespace detail

struct RunOptions {
  std::size_t threads = 1;
  std::optional<std::filesystem::path> out;  ///< checkpoints under out/runs/<hash>/
  std::function<void(const RunRecord&)> on_record;  ///< called from worker threads
};

/// Runs every (severity, seed, model) cell of an ood, ablate-c or compare
/// grid. A failing run is recorded, never dropped.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {}) {
  ExperimentResult res{cfg, {}, {}, {}};
  const auto jobs = detail::plan(res.config);
  const std::string chash = cfg.hash();
  res.records.resize(jobs.size());
  detail::parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
    const detail::Job& job = jobs[i];
    RunRecord& rec = res.records[i];
    rec.experiment = to_string(cfg.kind);
    rec.model = job.vae_reference ? "vae" : job.entry->name;
    rec.choice = job.choice;
    rec.severity = job.severity;
    rec.seed = job.seed;
    rec.config_hash = chash;
    rec.run_hash = detail::run_hash(chash, job);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (cfg.kind == Kind::Compare) detail::compare_run(res.config, job, rec, opt.out);
      else detail::classification_run(res.config, job, rec, opt.out);
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
      rec.values.clear();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opt.on_record) opt.on_record(rec);
  });
  res.aggregates = aggregate(res.records, metric_columns(cfg.kind));
  res.checks = detail::trend_checks(res);
  return res;
}

// -- output --------------------------------------------------------------------

/// Numbers are printed through the JSON serializer in both formats, so CSV
/// and JSON carry identical digits.
inline std::string report_csv(const ExperimentResult& res) {
  const auto cols = metric_columns(res.config.kind);
  std::ostringstream os;
  os << "experiment,model,choice,severity,seed,status";
  for (const auto& c : cols) os << ',' << c;
  os << ",config_hash,run_hash\n";
  for (const auto& r : res.records) {
    os << r.experiment << ',' << r.model << ',' << r.choice << ',' << (r.severity ? detail::fmt(*r.severity) : "")
       << ',' << r.seed << ',' << (r.ok ? "ok" : "failed");
    for (const auto& c : cols) {
      os << ',';
      if (const auto v = r.get(c)) os << detail::fmt(*v);
    }
    os << ',' << r.config_hash << ',' << r.run_hash << '\n';
  }
  return os.str();
}

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j{{"experiment", r.experiment}, {"model", r.model},          {"choice", r.choice},
                   {"seed", r.seed},             {"status", r.ok ? "ok" : "failed"}, {"config_hash", r.config_hash},
                   {"run_hash", r.run_hash}};
  j["severity"] = r.severity ? nlohmann::json(*r.severity) : nlohmann::json(nullptr);
  nlohmann::json v = nlohmann::json::object();
  for (const auto& [k, x] : r.values) v[k] = x;
  j["values"] = v;
  if (!r.ok) j["error"] = r.error;
  return j;
}

inline nlohmann::json to_json(const ExperimentResult& res) {
  nlohmann::json recs = nlohmann::json::array(), aggs = nlohmann::json::array(), checks = nlohmann::json::array();
  for (const auto& r : res.records) recs.push_back(to_json(r));
  for (const auto& a : res.aggregates) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [k, s] : a.metrics) m[k] = {{"mean", s.mean}, {"std", s.std}};
    nlohmann::json j{{"model", a.model}, {"choice", a.choice}, {"n_ok", a.n_ok}, {"n_failed", a.n_failed},
                     {"metrics", m}};
    j["severity"] = a.severity ? nlohmann::json(*a.severity) : nlohmann::json(nullptr);
    aggs.push_back(j);
  }
  for (const auto& c : res.checks)
    checks.push_back({{"name", c.name}, {"passes", c.passes}, {"total", c.total}, {"required", c.required},
                      {"soft", c.soft}, {"ok", c.ok}, {"detail", c.detail}});
  return {{"config_hash", res.config.hash()}, {"config", res.config.canonical()}, {"records", recs},
          {"aggregates", aggs}, {"checks", checks}};
}

inline std::string summary_text(const ExperimentResult& res) {
  std::ostringstream os;
  os << to_string(res.config.kind) << "  config " << res.config.hash() << "\n\n";
  for (const auto& a : res.aggregates) {
    os << a.model;
    if (!a.choice.empty()) os << " [" << a.choice << "]";
    if (a.severity) os << " severity " << detail::fmt(*a.severity);
    os << "  ok " << a.n_ok << " failed " << a.n_failed << "\n";
    for (const auto& [k, s] : a.metrics) {
      char line[128];
      std::snprintf(line, sizeof line, "    %-10s %.4f +- %.4f\n", k.c_str(), s.mean, s.std);
      os << line;
    }
  }
  if (!res.checks.empty()) os << "\nchecks\n";
  for (const auto& c : res.checks)
    os << "  " << (c.ok ? "PASS" : (c.soft ? "note" : "FAIL")) << "  " << c.name << "  (" << c.detail << ")\n";
  return os.str();
}

/// report.csv, report.json, summary.txt, and timing.json (wall clock, the
/// only non-reproducible output).
inline void write_outputs(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  bytes::write_file_atomic(dir / "report.csv", report_csv(res));
  bytes::write_file_atomic(dir / "report.json", to_json(res).dump(2) + "\n");
  bytes::write_file_atomic(dir / "summary.txt", summary_text(res));
  nlohmann::json t = nlohmann::json::array();
  for (const auto& r : res.records) t.push_back({{"run_hash", r.run_hash}, {"seconds", r.seconds}});
  bytes::write_file_atomic(dir / "timing.json", t.dump(2) + "\n");
}

}  // namespace cdisent::harness
