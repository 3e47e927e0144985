#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdisent/core/error.hpp"
#include "cdisent/ndiff/adam.hpp"
#include "cdisent/ndiff/mlp.hpp"

namespace cdisent::models {

/// Model family. `vae` and `beta-vae` are the single-component case of the
/// mixture machinery; `cvae` conditions encoder and decoder on one-hot c;
/// the `-ioss` variants add the support-independence regularizer.
enum class Variant { CdVae, Vae, BetaVae, CVae, CdVaeIoss, VaeIoss };

/// What sits on top of the aggregated latent: a decoder reconstructing x, or
/// a classifier predicting a task label.
enum class Head { Decoder, Classifier };

/// How sampled pi logits become mixture weights.
enum class PiPolicy { Softmax, UnitL2 };

/// KL target. VarianceOnly: KL(N(mu, S) || N(mu, I)) per component.
/// Full: KL(N(mu, S) || N(0, I)).
enum class KlForm { Auto, VarianceOnly, Full };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::CdVae: return "cdvae";
    case Variant::Vae: return "vae";
    case Variant::BetaVae: return "beta-vae";
    case Variant::CVae: return "cvae";
    case Variant::CdVaeIoss: return "cdvae-ioss";
    case Variant::VaeIoss: return "vae-ioss";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::CdVae, Variant::Vae, Variant::BetaVae, Variant::CVae, Variant::CdVaeIoss,
                    Variant::VaeIoss})
    if (to_string(v) == s) return v;
  throw Error("unknown model variant '" + s + "' (expected cdvae, vae, beta-vae, cvae, cdvae-ioss, vae-ioss)");
}

inline std::string to_string(Head h) { return h == Head::Decoder ? "decoder" : "classifier"; }

inline Head parse_head(const std::string& s) {
  if (s == "decoder") return Head::Decoder;
  if (s == "classifier") return Head::Classifier;
  throw Error("unknown head '" + s + "' (expected decoder or classifier)");
}

inline std::string to_string(PiPolicy p) { return p == PiPolicy::Softmax ? "softmax" : "unit-l2"; }

inline PiPolicy parse_pi_policy(const std::string& s) {
  if (s == "softmax") return PiPolicy::Softmax;
  if (s == "unit-l2") return PiPolicy::UnitL2;
  throw Error("unknown pi policy '" + s + "' (expected softmax or unit-l2)");
}

inline std::string to_string(KlForm k) {
  switch (k) {
    case KlForm::Auto: return "auto";
    case KlForm::VarianceOnly: return "variance-only";
    case KlForm::Full: return "full";
  }
  return "?";
}

inline KlForm parse_kl_form(const std::string& s) {
  for (KlForm k : {KlForm::Auto, KlForm::VarianceOnly, KlForm::Full})
    if (to_string(k) == s) return k;
  throw Error("unknown kl form '" + s + "'");
}

/// Mixture weights used at inference, when c is unknown. Posterior: the pi
/// mean. Prior: the training label frequencies, sum_c P(c) mu^c(x).
enum class Routing { Posterior, Prior };

inline std::string to_string(Routing r) { return r == Routing::Posterior ? "posterior" : "prior"; }

inline Routing parse_routing(const std::string& s) {
  if (s == "posterior") return Routing::Posterior;
  if (s == "prior") return Routing::Prior;
  throw Error("unknown routing '" + s + "' (expected posterior or prior)");
}

struct CdVaeConfig {
  Variant variant = Variant::CdVae;
  Head head = Head::Decoder;
  std::size_t input_dim = 0;
  std::size_t latent_dim = 4;
  std::size_t n_components = 1;  ///< |C|: number of confounder label values
  std::size_t n_classes = 0;     ///< classifier head only
  std::size_t task_factor = 0;   ///< factor column predicted by the classifier head
  std::vector<std::size_t> encoder_hidden{64};
  std::vector<std::size_t> head_hidden{64};
  ndiff::Activation activation = ndiff::Activation::Tanh;
  double beta = 1.0;
  double w_rec = 1.0;
  double w_cls = 1.0;
  double w_kl = 1.0;
  double w_ioss = 1.0;
  PiPolicy pi_policy = PiPolicy::Softmax;
  KlForm kl_form = KlForm::Auto;
  bool sample_pi = true;
  ndiff::AdamConfig adam{};
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool zero_init_last = false;
  Routing eval_routing = Routing::Posterior;
  std::vector<double> label_prior;  ///< set by train; empty means uniform

  /// Number of Gaussian heads in the encoder.
  std::size_t heads() const {
    return (variant == Variant::CdVae || variant == Variant::CdVaeIoss) ? n_components : 1;
  }
  bool has_pi() const { return heads() > 1; }
  bool conditional_input() const { return variant == Variant::CVae; }
  std::size_t onehot_width() const { return conditional_input() ? n_components : 0; }
  bool has_ioss() const { return variant == Variant::CdVaeIoss || variant == Variant::VaeIoss; }

  KlForm effective_kl() const {
    if (kl_form != KlForm::Auto) return kl_form;
    return variant == Variant::CVae ? KlForm::Full : KlForm::VarianceOnly;
  }

  /// Encoder output width: per head mu and log-variance, then pi mean and log-sd.
  std::size_t encoder_out() const { return 2 * heads() * latent_dim + (has_pi() ? 2 * heads() : 0); }

  ndiff::MlpArch encoder_arch() const {
    std::vector<std::size_t> sizes{input_dim + onehot_width()};
    sizes.insert(sizes.end(), encoder_hidden.begin(), encoder_hidden.end());
    sizes.push_back(encoder_out());
    return {"enc", sizes, activation};
  }

  ndiff::MlpArch head_arch() const {
    std::vector<std::size_t> sizes{latent_dim + (head == Head::Decoder ? onehot_width() : 0)};
    sizes.insert(sizes.end(), head_hidden.begin(), head_hidden.end());
    sizes.push_back(head == Head::Decoder ? input_dim : n_classes);
    return {head == Head::Decoder ? "dec" : "cls", sizes, activation};
  }

  void validate() const {
    if (input_dim == 0) throw Error("CdVaeConfig: input_dim must be set");
    if (latent_dim == 0) throw Error("CdVaeConfig: latent_dim must be >= 1");
    if (n_components == 0) throw Error("CdVaeConfig: n_components must be >= 1");
    if (head == Head::Classifier && n_classes < 2) throw Error("CdVaeConfig: classifier head needs n_classes >= 2");
    for (double w : {beta, w_rec, w_cls, w_kl, w_ioss})
      if (!(w >= 0.0)) throw Error("CdVaeConfig: loss weights and beta must be >= 0");
    if (batch_size == 0) throw Error("CdVaeConfig: batch_size must be >= 1");
    if (has_ioss() && batch_size < 32) throw Error("CdVaeConfig: ioss variants need batch_size >= 32");
    if (!(adam.lr > 0.0)) throw Error("CdVaeConfig: learning rate must be positive");
    if (!label_prior.empty()) {
      if (label_prior.size() != heads()) throw Error("CdVaeConfig: label_prior must have one entry per component");
      for (double p : label_prior)
        if (!(p >= 0.0)) throw Error("CdVaeConfig: label_prior entries must be >= 0");
    }
  }
};

inline nlohmann::json to_json(const CdVaeConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"head", to_string(c.head)},
          {"input_dim", c.input_dim},
          {"latent_dim", c.latent_dim},
          {"n_components", c.n_components},
          {"n_classes", c.n_classes},
          {"task_factor", c.task_factor},
          {"encoder_hidden", c.encoder_hidden},
          {"head_hidden", c.head_hidden},
          {"activation", ndiff::to_string(c.activation)},
          {"beta", c.beta},
          {"w_rec", c.w_rec},
          {"w_cls", c.w_cls},
          {"w_kl", c.w_kl},
          {"w_ioss", c.w_ioss},
          {"pi_policy", to_string(c.pi_policy)},
          {"kl_form", to_string(c.kl_form)},
          {"sample_pi", c.sample_pi},
          {"lr", c.adam.lr},
          {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},
          {"adam_eps", c.adam.eps},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"zero_init_last", c.zero_init_last},
          {"eval_routing", to_string(c.eval_routing)},
          {"label_prior", c.label_prior}};
}

/// Missing keys keep the values already in `base`.
inline CdVaeConfig config_from_json(const nlohmann::json& j, CdVaeConfig base = {}) {
  try {
    CdVaeConfig c = std::move(base);
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
    if (j.contains("activation")) c.activation = ndiff::parse_activation(j.at("activation").get<std::string>());
    if (j.contains("pi_policy")) c.pi_policy = parse_pi_policy(j.at("pi_policy").get<std::string>());
    if (j.contains("kl_form")) c.kl_form = parse_kl_form(j.at("kl_form").get<std::string>());
    c.input_dim = j.value("input_dim", c.input_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.n_components = j.value("n_components", c.n_components);
    c.n_classes = j.value("n_classes", c.n_classes);
    c.task_factor = j.value("task_factor", c.task_factor);
    c.encoder_hidden = j.value("encoder_hidden", c.encoder_hidden);
    c.head_hidden = j.value("head_hidden", c.head_hidden);
    c.beta = j.value("beta", c.beta);
    c.w_rec = j.value("w_rec", c.w_rec);
    c.w_cls = j.value("w_cls", c.w_cls);
    c.w_kl = j.value("w_kl", c.w_kl);
    c.w_ioss = j.value("w_ioss", c.w_ioss);
    c.sample_pi = j.value("sample_pi", c.sample_pi);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps = j.value("adam_eps", c.adam.eps);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.zero_init_last = j.value("zero_init_last", c.zero_init_last);
    if (j.contains("eval_routing")) c.eval_routing = parse_routing(j.at("eval_routing").get<std::string>());
    c.label_prior = j.value("label_prior", c.label_prior);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

}  // namespace cdisent::models
