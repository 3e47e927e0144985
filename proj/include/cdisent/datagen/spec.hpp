#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdisent/core/error.hpp"

namespace cdisent::datagen {

struct Factor {
  std::string name;
  std::size_t card = 2;
};

struct FactorSpec {
  std::vector<Factor> factors;

  std::size_t size() const noexcept { return factors.size(); }
  std::size_t card(std::size_t k) const { return factors.at(k).card; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t k = 0; k < factors.size(); ++k)
      if (factors[k].name == name) return k;
    throw Error("unknown factor '" + name + "'");
  }

  std::size_t total_values() const {
    std::size_t s = 0;
    for (const auto& f : factors) s += f.card;
    return s;
  }

  void validate() const {
    if (factors.empty()) throw Error("FactorSpec: no factors");
    std::set<std::string> names;
    for (const auto& f : factors) {
      if (f.card < 2) throw Error("FactorSpec: factor '" + f.name + "' needs cardinality >= 2");
      if (f.card > 65535) throw Error("FactorSpec: factor '" + f.name + "' cardinality too large");
      if (!names.insert(f.name).second) throw Error("FactorSpec: duplicate factor '" + f.name + "'");
    }
  }
};

enum class ObsMode { Tabular, Image };

/// Observation model. Tabular: x = A onehot(g) + noise, A drawn from
/// `mixing_seed` (or the identity). Image: a colored shape on a gray
/// background, H x W x 3.
struct ObservationSpec {
  ObsMode mode = ObsMode::Tabular;
  std::size_t dim = 32;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 0.0;
  std::uint64_t mixing_seed = 1;
  bool identity_mixing = false;
  std::vector<double> factor_gain;  ///< per factor; empty means all 1
};

/// Confounded generative process: c ~ P(C*), then each factor independently
/// from P(G_k | c), then x = render(g).
struct GenSpec {
  FactorSpec factors;
  std::vector<double> confounder_prior;
  std::vector<std::vector<std::vector<double>>> conditionals;  ///< [c][k][value]
  ObservationSpec observation;

  std::size_t n_confounders() const noexcept { return confounder_prior.size(); }

  std::vector<std::size_t> obs_shape() const {
    if (observation.mode == ObsMode::Image) return {observation.height, observation.width, 3};
    return {observation.dim};
  }

  std::size_t obs_dim() const {
    std::size_t n = 1;
    for (std::size_t e : obs_shape()) n *= e;
    return n;
  }

  /// Mixture-averaged marginal of each factor: sum_c P(c) P(G_k | c).
  std::vector<std::vector<double>> factor_marginals() const {
    std::vector<std::vector<double>> m(factors.size());
    for (std::size_t k = 0; k < factors.size(); ++k) {
      m[k].assign(factors.card(k), 0.0);
      for (std::size_t c = 0; c < n_confounders(); ++c)
        for (std::size_t v = 0; v < factors.card(k); ++v) m[k][v] += confounder_prior[c] * conditionals[c][k][v];
    }
    return m;
  }

  /// Same factor marginals, single confounder value: factors independent.
  GenSpec decorrelated() const {
    GenSpec d = *this;
    d.confounder_prior = {1.0};
    d.conditionals = {factor_marginals()};
    return d;
  }

  void validate() const {
    factors.validate();
    auto check_dist = [](const std::vector<double>& p, const std::string& what) {
      double s = 0.0;
      for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(what + ": negative or non-finite probability");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-9) throw Error(what + ": probabilities sum to " + std::to_string(s));
    };
    if (confounder_prior.empty()) throw Error("GenSpec: confounder prior is empty");
    if (confounder_prior.size() > 65535) throw Error("GenSpec: too many confounder values");
    check_dist(confounder_prior, "GenSpec confounder prior");
    if (conditionals.size() != confounder_prior.size())
      throw Error("GenSpec: need one conditional table per confounder value");
    for (std::size_t c = 0; c < conditionals.size(); ++c) {
      if (conditionals[c].size() != factors.size())
        throw Error("GenSpec: conditional for c=" + std::to_string(c) + " must cover every factor");
      for (std::size_t k = 0; k < factors.size(); ++k) {
        if (conditionals[c][k].size() != factors.card(k))
          throw Error("GenSpec: P(" + factors.factors[k].name + " | c=" + std::to_string(c) + ") has wrong size");
        check_dist(conditionals[c][k], "GenSpec P(" + factors.factors[k].name + " | c=" + std::to_string(c) + ")");
      }
    }
    const auto& o = observation;
    if (!(o.noise >= 0.0)) throw Error("GenSpec: observation noise must be >= 0");
    if (!o.factor_gain.empty() && o.factor_gain.size() != factors.size())
      throw Error("GenSpec: factor_gain needs one entry per factor");
    if (o.mode == ObsMode::Tabular) {
      if (o.dim == 0) throw Error("GenSpec: tabular dimension must be positive");
      if (o.identity_mixing && o.dim != factors.total_values())
        throw Error("GenSpec: identity mixing requires dim == sum of factor cardinalities (" +
                    std::to_string(factors.total_values()) + ")");
    } else {
      if (o.height < 8 || o.width < 8 || o.height > 64 || o.width > 64)
        throw Error("GenSpec: image size must lie in [8, 64]");
      static const std::set<std::string> known{"shape", "hue", "size", "posx", "posy"};
      for (const auto& f : factors.factors) {
        if (!known.contains(f.name))
          throw Error("GenSpec: image mode does not know how to render factor '" + f.name + "'");
        if (f.name == "shape" && f.card > 5) throw Error("GenSpec: image mode renders at most 5 shapes");
      }
    }
  }
};

/// "factor k prefers value (c mod card_k) with probability `strength` under
/// confounder value c", the remaining mass spread evenly.
struct CorrelationRule {
  std::vector<std::string> factors;
  double strength = 0.9;
};

inline GenSpec make_confounded_spec(FactorSpec factors, std::size_t n_confounders,
                                    const std::vector<CorrelationRule>& rules, ObservationSpec obs,
                                    std::vector<double> prior = {}) {
  if (n_confounders == 0) throw Error("make_confounded_spec: need at least one confounder value");
  GenSpec g;
  g.factors = std::move(factors);
  g.observation = std::move(obs);
  g.confounder_prior = prior.empty() ? std::vector<double>(n_confounders, 1.0 / static_cast<double>(n_confounders))
                                     : std::move(prior);
  g.conditionals.assign(n_confounders, {});
  for (std::size_t c = 0; c < n_confounders; ++c)
    for (const auto& f : g.factors.factors)
      g.conditionals[c].push_back(std::vector<double>(f.card, 1.0 / static_cast<double>(f.card)));
  for (const auto& rule : rules) {
    if (rule.strength < 0.0 || rule.strength > 1.0) throw Error("CorrelationRule: strength outside [0, 1]");
    for (const auto& name : rule.factors) {
      const std::size_t k = g.factors.index_of(name);
      const std::size_t card = g.factors.card(k);
      for (std::size_t c = 0; c < n_confounders; ++c) {
        auto& row = g.conditionals[c][k];
        const double rest = (1.0 - rule.strength) / static_cast<double>(card - 1);
        for (std::size_t v = 0; v < card; ++v) row[v] = (v == c % card) ? rule.strength : rest;
      }
    }
  }
  g.validate();
  return g;
}

// -- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const ObservationSpec& o) {
  nlohmann::json j;
  j["mode"] = o.mode == ObsMode::Image ? "image" : "tabular";
  j["noise"] = o.noise;
  if (o.mode == ObsMode::Image) {
    j["height"] = o.height;
    j["width"] = o.width;
  } else {
    j["dim"] = o.dim;
    j["mixing_seed"] = o.mixing_seed;
    j["identity_mixing"] = o.identity_mixing;
    if (!o.factor_gain.empty()) j["factor_gain"] = o.factor_gain;
  }
  return j;
}

inline ObservationSpec observation_from_json(const nlohmann::json& j) {
  ObservationSpec o;
  const std::string mode = j.value("mode", std::string("tabular"));
  if (mode == "image") o.mode = ObsMode::Image;
  else if (mode == "tabular") o.mode = ObsMode::Tabular;
  else throw FormatError("observation.mode must be 'tabular' or 'image'");
  o.noise = j.value("noise", 0.0);
  o.height = j.value("height", std::size_t{16});
  o.width = j.value("width", std::size_t{16});
  o.dim = j.value("dim", std::size_t{32});
  o.mixing_seed = j.value("mixing_seed", std::uint64_t{1});
  o.identity_mixing = j.value("identity_mixing", false);
  if (j.contains("factor_gain")) o.factor_gain = j.at("factor_gain").get<std::vector<double>>();
  return o;
}

inline nlohmann::json to_json(const GenSpec& g) {
  nlohmann::json j;
  j["factors"] = nlohmann::json::array();
  for (const auto& f : g.factors.factors) j["factors"].push_back({{"name", f.name}, {"cardinality", f.card}});
  j["confounder_prior"] = g.confounder_prior;
  j["conditionals"] = g.conditionals;
  j["observation"] = to_json(g.observation);
  return j;
}

/// Accepts either explicit "conditionals" or the compact form
/// {"confounders": n, "rules": [{"factors": [...], "strength": s}]}.
inline GenSpec genspec_from_json(const nlohmann::json& j) {
  try {
    FactorSpec fs;
    for (const auto& f : j.at("factors"))
      fs.factors.push_back({f.at("name").get<std::string>(), f.at("cardinality").get<std::size_t>()});
    ObservationSpec obs = observation_from_json(j.value("observation", nlohmann::json::object()));
    if (j.contains("conditionals")) {
      GenSpec g;
      g.factors = std::move(fs);
      g.confounder_prior = j.at("confounder_prior").get<std::vector<double>>();
      g.conditionals = j.at("conditionals").get<std::vector<std::vector<std::vector<double>>>>();
      g.observation = std::move(obs);
      g.validate();
      return g;
    }
    std::vector<CorrelationRule> rules;
    for (const auto& r : j.value("rules", nlohmann::json::array()))
      rules.push_back({r.at("factors").get<std::vector<std::string>>(), r.value("strength", 0.9)});
    std::vector<double> prior;
    if (j.contains("confounder_prior")) prior = j.at("confounder_prior").get<std::vector<double>>();
    return make_confounded_spec(std::move(fs), j.at("confounders").get<std::size_t>(), rules, std::move(obs),
                                std::move(prior));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GenSpec json: ") + e.what());
  }
}

}  // namespace cdisent::datagen
