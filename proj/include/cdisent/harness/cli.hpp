#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdisent/datagen/dataset_io.hpp"
#include "cdisent/harness/config.hpp"
#include "cdisent/harness/experiments.hpp"
#include "cdisent/harness/properties.hpp"

namespace cdisent::harness {

enum ExitCode : int { kExitOk = 0, kExitFailedRecord = 1, kExitConfig = 2 };

struct CliOptions {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 1;
  std::string format = "csv";
  std::string model_dir;
};

/// Effective thread count: CDISENT_THREADS wins over --threads.
inline std::size_t resolve_threads(std::size_t flag) {
  if (const char* env = std::getenv("CDISENT_THREADS"); env && *env) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("CDISENT_THREADS must be a positive integer, got '") + env + "'");
  }
  return flag;
}

/// Config for `command`: the file if given, else defaults. The subcommand
/// sets the experiment kind; --seed, --out and --model override the file.
inline ExperimentConfig resolve_config(const CliOptions& o) {
  nlohmann::json j = nlohmann::json::object();
  std::filesystem::path base;
  if (!o.config_path.empty()) {
    const std::filesystem::path p(o.config_path);
    if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + p.string());
    try {
      j = nlohmann::json::parse(bytes::read_file_bytes(p));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(p.string() + ": " + e.what());
    }
    base = p.parent_path();
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  j["kind"] = o.command;
  if (o.seed) j["seeds"] = {*o.seed};
  if (!o.out.empty()) j["out"] = o.out;
  if (!o.model_dir.empty()) j["model_dir"] = o.model_dir;
  return config_from_json(j, base);
}

namespace detail {

inline int cmd_verify(const CliOptions& o, std::ostream& out) {
  const AdjustmentSuite a = adjustment_suite();
  const LcSuite l = lc_suite();
  const nlohmann::json j{{"adjustment", to_json(a)}, {"lc", to_json(l)}, {"ok", a.ok() && l.ok()}};
  if (o.format == "json") {
    out << j.dump(2) << "\n";
  } else {
    out << "suite,ok,detail\n";
    out << "adjustment," << (a.ok() ? "ok" : "failed") << ",max_err_full=" << fmt(a.max_err_full)
        << " max_err_superset=" << fmt(a.max_err_superset) << " empty_gap_fraction=" << fmt(a.empty_gap_fraction())
        << "\n";
    out << "lc," << (l.ok() ? "ok" : "failed") << ",max_diagonal=" << fmt(l.max_diagonal)
        << " min_correlated=" << fmt(l.min_correlated) << "\n";
  }
  if (!o.out.empty()) {
    std::filesystem::create_directories(o.out);
    bytes::write_file_atomic(std::filesystem::path(o.out) / "verify.json", j.dump(2) + "\n");
  }
  return a.ok() && l.ok() ? kExitOk : kExitFailedRecord;
}

inline int cmd_generate(const ExperimentConfig& c, std::ostream& out) {
  const datagen::GenSpec spec = c.spec();
  const std::uint64_t seed = c.seeds.front();
  const double sev = c.severities.front();
  const std::uint64_t ds_seed = data_seed(Kind::Ood, seed, sev);
  const auto [train, target] = datagen::shifted_split(spec, sev, c.n_train, c.n_target, ds_seed);
  const std::filesystem::path dir(c.out);
  const nlohmann::json extra{{"spec", datagen::to_json(spec)}, {"seed", seed}, {"severity", sev}};
  datagen::write_dataset(train, dir / "train", extra);
  datagen::write_dataset(target, dir / "target", extra);
  datagen::write_dataset(datagen::sample_dataset(spec, c.n_train, derive_seed(data_seed(Kind::Compare, seed, {}), 0)),
                         dir / "confounded", extra);
  out << "wrote " << (dir / "train").string() << ", " << (dir / "target").string() << ", "
      << (dir / "confounded").string() << "\n";
  return kExitOk;
}

/// Trains the first model entry: classifier heads on the shifted split at
/// the first severity, decoders on a confounded sample.
inline int cmd_train(const ExperimentConfig& c, std::ostream& out) {
  const datagen::GenSpec spec = c.spec();
  const std::uint64_t seed = c.seeds.front();
  const models::CdVaeConfig base = c.model_config(c.models.front());
  const bool classifier = base.head == models::Head::Classifier;
  const datagen::LabeledDataset train =
      classifier ? datagen::shifted_split(spec, c.severities.front(), c.n_train, 1, data_seed(Kind::Ood, seed,
                                                                                             c.severities.front()))
                       .first
                 : datagen::sample_dataset(spec, c.n_train, derive_seed(data_seed(Kind::Compare, seed, {}), 0));
  auto m = models::make_model<float>(fit_config(base, spec, train, classifier, seed));
  const models::TrainResult tr = models::train(m, train);
  const std::filesystem::path dir = std::filesystem::path(c.out) / "model";
  models::save_model(m, dir, &tr);
  out << "epoch,total,rec,cls,kl,ioss\n";
  for (const auto& e : tr.history)
    out << e.epoch << ',' << fmt(e.mean.total) << ',' << fmt(e.mean.rec) << ',' << fmt(e.mean.cls) << ','
        << fmt(e.mean.kl) << ',' << fmt(e.mean.ioss) << "\n";
  if (tr.diverged) {
    std::cerr << "training diverged in epoch " << tr.diverged_epoch << "\n";
    return kExitFailedRecord;
  }
  return kExitOk;
}

inline int cmd_eval(const ExperimentConfig& c, const std::string& format, std::ostream& out) {
  if (c.model_dir.empty()) throw ConfigError("eval needs a model directory (--model or \"model_dir\")");
  if (!std::filesystem::exists(std::filesystem::path(c.model_dir) / "model.json"))
    throw ConfigError("model not found: " + (std::filesystem::path(c.model_dir) / "model.json").string());
  const auto m = models::load_model<float>(c.model_dir);
  const datagen::GenSpec spec = c.spec();
  const auto eval =
      datagen::sample_dataset(spec, c.n_eval, derive_seed(data_seed(Kind::Compare, c.seeds.front(), {}), 1));
  const metrics::MetricReport r = metrics::evaluate(m, eval, spec, c.eval);
  const nlohmann::json j = metrics::to_json(r);
  if (format == "json") out << j.dump(2) << "\n";
  else out << metrics::kReportCsvHeader << "\n" << metrics::to_csv_row(r) << "\n";
  std::filesystem::create_directories(c.out);
  bytes::write_file_atomic(std::filesystem::path(c.out) / "metrics.json", j.dump(2) + "\n");
  return kExitOk;
}

inline int cmd_grid(const ExperimentConfig& c, const CliOptions& o, std::ostream& out) {
  RunOptions ro;
  ro.threads = resolve_threads(o.threads);
  ro.out = std::filesystem::path(c.out);
  ro.on_record = [](const RunRecord& r) {
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[" << r.experiment << "] " << r.model << (r.choice.empty() ? "" : " " + r.choice)
              << (r.severity ? " severity " + fmt(*r.severity) : "") << " seed " << r.seed << ": "
              << (r.ok ? "ok" : "FAILED " + r.error) << "\n";
  };
  const ExperimentResult res = run_experiment(c, ro);
  write_outputs(res, c.out);
  if (o.format == "json") out << to_json(res).dump(2) << "\n";
  else out << report_csv(res);
  std::cerr << summary_text(res);
  return res.any_failed() ? kExitFailedRecord : kExitOk;
}

}  // namespace detail

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Confounded disentanglement experiments"};
  app.require_subcommand(1, 1);
  CliOptions o;
  for (const char* name : {"generate", "train", "eval", "ood", "ablate-c", "compare", "verify"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config_path, "experiment config (JSON)");
    sub->add_option("--seed", o.seed, "run a single seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "parallel runs (CDISENT_THREADS overrides)")->check(CLI::PositiveNumber);
    sub->add_option("--format", o.format, "stdout format")->check(CLI::IsMember({"csv", "json"}));
    if (std::string(name) == "eval") sub->add_option("--model", o.model_dir, "trained model directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitConfig;
  }
  o.command = app.get_subcommands().front()->get_name();
  try {
    if (o.command == "verify") return detail::cmd_verify(o, out);
    const ExperimentConfig c = resolve_config(o);
    if (o.command == "generate") return detail::cmd_generate(c, out);
    if (o.command == "train") return detail::cmd_train(c, out);
    if (o.command == "eval") return detail::cmd_eval(c, o.format, out);
    return detail::cmd_grid(c, o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailedRecord;
  }
}

}  // namespace cdisent::harness
