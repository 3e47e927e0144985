#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdisent/core/bytes.hpp"
#include "cdisent/core/error.hpp"
#include "cdisent/core/hash.hpp"
#include "cdisent/datagen/spec.hpp"
#include "cdisent/metrics/report.hpp"
#include "cdisent/models/config.hpp"

namespace cdisent::harness {

inline constexpr int kConfigVersion = 1;

/// Harness config errors map to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Kind { Generate, Train, Eval, Ood, AblateC, Compare };

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::Generate: return "generate";
    case Kind::Train: return "train";
    case Kind::Eval: return "eval";
    case Kind::Ood: return "ood";
    case Kind::AblateC: return "ablate-c";
    case Kind::Compare: return "compare";
  }
  return "?";
}

inline Kind parse_kind(const std::string& s) {
  for (Kind k : {Kind::Generate, Kind::Train, Kind::Eval, Kind::Ood, Kind::AblateC, Kind::Compare})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

/// Built-in datasets. "tabular": four factors (shape 4, hue 4, size 3, pos 3)
/// with shape and hue tied to a four-valued confounder at strength 0.9, a
/// 32-dimensional mixed observation with unit noise and a weak shape signal.
/// "image": the same factors rendered at 16 x 16, position along x.
inline nlohmann::json recipe_json(const std::string& name) {
  auto factors = [](const char* pos) {
    return nlohmann::json::array({{{"name", "shape"}, {"cardinality", 4}},
                                  {{"name", "hue"}, {"cardinality", 4}},
                                  {{"name", "size"}, {"cardinality", 3}},
                                  {{"name", pos}, {"cardinality", 3}}});
  };
  const nlohmann::json rules = nlohmann::json::array({{{"factors", {"shape", "hue"}}, {"strength", 0.9}}});
  if (name == "tabular")
    return {{"factors", factors("pos")},
            {"confounders", 4},
            {"rules", rules},
            {"observation",
             {{"mode", "tabular"}, {"dim", 32}, {"noise", 1.0}, {"mixing_seed", 1},
              {"factor_gain", {0.25, 1.5, 1.0, 1.0}}}}};
  if (name == "image")
    return {{"factors", factors("posx")},
            {"confounders", 4},
            {"rules", rules},
            {"observation", {{"mode", "image"}, {"height", 16}, {"width", 16}, {"noise", 0.05}}}};
  throw ConfigError("unknown data recipe '" + name + "' (expected tabular or image)");
}

/// A model entry: base model JSON with per-entry overrides applied.
struct ModelEntry {
  std::string name;
  nlohmann::json overrides;  ///< CdVaeConfig keys
};

struct ExperimentConfig {
  Kind kind = Kind::Ood;
  nlohmann::json data;  ///< resolved GenSpec JSON
  std::size_t n_train = 8000;
  std::size_t n_target = 4000;
  std::size_t n_source_test = 4000;
  std::size_t n_eval = 5000;
  std::vector<double> severities{0.5};
  std::vector<std::uint64_t> seeds{0};
  std::size_t partial_groups = 2;
  nlohmann::json model = nlohmann::json::object();
  std::vector<ModelEntry> models;
  metrics::EvalSettings eval;
  std::string model_dir;  ///< eval: trained model to score
  std::string out = "out";
  std::size_t threads = 1;

  datagen::GenSpec spec() const { return datagen::genspec_from_json(data); }

  /// Everything that determines the emitted numbers; `out` and `threads`
  /// are excluded.
  nlohmann::json canonical() const {
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& m : models) ms.push_back({{"name", m.name}, {"overrides", m.overrides}});
    return {{"cfg_version", kConfigVersion},
            {"kind", to_string(kind)},
            {"data", data},
            {"n_train", n_train},
            {"n_target", n_target},
            {"n_source_test", n_source_test},
            {"n_eval", n_eval},
            {"severities", severities},
            {"seeds", seeds},
            {"partial_groups", partial_groups},
            {"model", model},
            {"models", ms},
            {"eval", eval.to_json()},
            {"model_dir", model_dir}};
  }

  std::string hash() const { return hex64(fnv1a(canonical().dump())); }

  /// Base model config with `entry` overrides applied.
  models::CdVaeConfig model_config(const ModelEntry& entry) const {
    models::CdVaeConfig c = models::config_from_json(model);
    return models::config_from_json(entry.overrides, c);
  }
};

/// Default model list per experiment kind.
inline std::vector<ModelEntry> default_models(Kind k) {
  switch (k) {
    case Kind::Ood: return {{"beta-vae", {{"variant", "beta-vae"}, {"beta", 4.0}}}, {"cdvae", {{"variant", "cdvae"}}}};
    case Kind::AblateC: return {{"cdvae", {{"variant", "cdvae"}}}};
    case Kind::Compare:
      return {{"vae", {{"variant", "vae"}}},
              {"beta-vae", {{"variant", "beta-vae"}, {"beta", 4.0}}},
              {"cvae", {{"variant", "cvae"}}},
              {"cdvae", {{"variant", "cdvae"}}},
              {"cdvae-ioss", {{"variant", "cdvae-ioss"}}}};
    default: return {{"cdvae", {{"variant", "cdvae"}}}};
  }
}

inline metrics::EvalSettings eval_from_json(const nlohmann::json& j) {
  metrics::EvalSettings s;
  s.probes = j.value("probes", s.probes);
  s.seed = j.value("seed", s.seed);
  s.mic_samples = j.value("mic_samples", s.mic_samples);
  s.ioss.resolution = j.value("ioss_resolution", s.ioss.resolution);
  s.ioss.quantile = j.value("ioss_quantile", s.ioss.quantile);
  s.ioss.random_pairs = j.value("ioss_random_pairs", s.ioss.random_pairs);
  if (j.contains("probe_label") && !j.at("probe_label").is_null())
    s.probe_label = j.at("probe_label").get<std::uint16_t>();
  return s;
}

/// `base_dir` resolves a relative "data": {"path": ...}.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  static const std::set<std::string> known{"cfg_version", "kind", "data", "n_train", "n_target", "n_source_test",
                                           "n_eval", "severities", "severity", "seeds", "partial_groups", "model",
                                           "models", "eval", "model_dir", "out", "threads"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  try {
    const int version = j.value("cfg_version", kConfigVersion);
    if (version != kConfigVersion)
      throw ConfigError("cfg_version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kConfigVersion) + ")");
    ExperimentConfig c;
    c.kind = parse_kind(j.value("kind", std::string("ood")));
    const nlohmann::json data = j.value("data", nlohmann::json{{"recipe", "tabular"}});
    if (data.contains("recipe")) {
      c.data = recipe_json(data.at("recipe").get<std::string>());
      if (data.contains("observation"))
        for (auto it = data.at("observation").begin(); it != data.at("observation").end(); ++it)
          c.data["observation"][it.key()] = it.value();
      if (data.contains("rules")) c.data["rules"] = data.at("rules");
    } else if (data.contains("path")) {
      std::filesystem::path p = data.at("path").get<std::string>();
      if (p.is_relative()) p = base_dir / p;
      if (!std::filesystem::exists(p)) throw ConfigError("data spec file not found: " + p.string());
      c.data = nlohmann::json::parse(bytes::read_file_bytes(p));
    } else {
      c.data = data;
    }
    c.spec();  // validate early
    c.n_train = j.value("n_train", c.n_train);
    c.n_target = j.value("n_target", c.n_target);
    c.n_source_test = j.value("n_source_test", c.n_source_test);
    c.n_eval = j.value("n_eval", c.n_eval);
    if (j.contains("severity")) c.severities = {j.at("severity").get<double>()};
    c.severities = j.value("severities", c.severities);
    c.seeds = j.value("seeds", c.seeds);
    c.partial_groups = j.value("partial_groups", c.partial_groups);
    c.model = j.value("model", c.model);
    models::config_from_json(c.model);  // validate keys parse
    if (j.contains("models")) {
      for (const auto& m : j.at("models")) {
        ModelEntry e{m.at("name").get<std::string>(), m};
        e.overrides.erase("name");
        c.models.push_back(std::move(e));
      }
    } else {
      c.models = default_models(c.kind);
    }
    for (const auto& m : c.models) c.model_config(m);
    c.eval = eval_from_json(j.value("eval", nlohmann::json::object()));
    c.model_dir = j.value("model_dir", c.model_dir);
    c.out = j.value("out", c.out);
    c.threads = j.value("threads", c.threads);

    if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
    if (c.severities.empty()) throw ConfigError("severities must not be empty");
    for (double s : c.severities)
      if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("severity " + std::to_string(s) + " outside [0, 1]");
    if (c.n_train == 0 || c.n_target == 0 || c.n_source_test == 0 || c.n_eval == 0)
      throw ConfigError("sample counts must be >= 1");
    if (c.threads == 0) throw ConfigError("threads must be >= 1");
    if (c.models.empty()) throw ConfigError("models must not be empty");
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes::read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.parent_path());
}

}  // namespace cdisent::harness
