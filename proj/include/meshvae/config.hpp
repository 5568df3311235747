#pragma once

#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "meshvae/experiment.hpp"
#include "meshvae/synthetic.hpp"

namespace meshvae {

/// Everything a CLI run can configure. Every key is optional and falls
/// back to the struct defaults; unknown keys are rejected.
struct AppConfig {
  SyntheticSpec synthetic;
  ExperimentConfig experiment;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const char* section,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw std::invalid_argument(std::string("config: section '") + section +
                                "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() +
                                  "' in section '" + section + "'");
  }
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void get_range(const nlohmann::json& j, const char* key, Range& out) {
  if (!j.contains(key)) return;
  const nlohmann::json& v = j.at(key);
  if (!v.is_array() || v.size() != 2)
    throw std::invalid_argument(std::string("config: '") + key + "' must be [lo, hi]");
  out.lo = v[0].get<double>();
  out.hi = v[1].get<double>();
}

}  // namespace detail

inline SyntheticSpec parse_synthetic_spec(const nlohmann::json& j) {
  detail::check_keys(j, "synthetic",
                     {"n_theta", "n_len", "length", "neck_radius", "sac_radius", "sac_center",
                      "sac_width", "bend_amplitude", "rotation_jitter", "scale_jitter",
                      "corpus_size", "seed"});
  SyntheticSpec spec;
  detail::get_if(j, "n_theta", spec.n_theta);
  detail::get_if(j, "n_len", spec.n_len);
  detail::get_if(j, "length", spec.length);
  detail::get_range(j, "neck_radius", spec.neck_radius);
  detail::get_range(j, "sac_radius", spec.sac_radius);
  detail::get_range(j, "sac_center", spec.sac_center);
  detail::get_range(j, "sac_width", spec.sac_width);
  detail::get_range(j, "bend_amplitude", spec.bend_amplitude);
  detail::get_range(j, "rotation_jitter", spec.rotation_jitter);
  detail::get_range(j, "scale_jitter", spec.scale_jitter);
  detail::get_if(j, "corpus_size", spec.corpus_size);
  detail::get_if(j, "seed", spec.seed);
  return spec;
}

inline ModelConfig parse_model_config(const nlohmann::json& j) {
  detail::check_keys(j, "model",
                     {"latent_dim", "beta", "cheb_order", "channels", "pooling_factor",
                      "hidden_dense_width", "alpha_vertex", "alpha_chamfer", "alpha_edge",
                      "alpha_normal", "cheb_bias", "signed_normal_loss"});
  ModelConfig c;
  detail::get_if(j, "latent_dim", c.latent_dim);
  detail::get_if(j, "beta", c.beta);
  detail::get_if(j, "cheb_order", c.cheb_order);
  detail::get_if(j, "channels", c.channels);
  detail::get_if(j, "pooling_factor", c.pooling_factor);
  detail::get_if(j, "hidden_dense_width", c.hidden_dense_width);
  detail::get_if(j, "alpha_vertex", c.alpha_vertex);
  detail::get_if(j, "alpha_chamfer", c.alpha_chamfer);
  detail::get_if(j, "alpha_edge", c.alpha_edge);
  detail::get_if(j, "alpha_normal", c.alpha_normal);
  detail::get_if(j, "cheb_bias", c.cheb_bias);
  detail::get_if(j, "signed_normal_loss", c.signed_normal_loss);
  return c;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& root) {
  ExperimentConfig config;
  if (root.contains("model")) config.model = parse_model_config(root.at("model"));
  if (!root.contains("experiment")) return config;
  const nlohmann::json& j = root.at("experiment");
  detail::check_keys(j, "experiment",
                     {"folds", "epochs", "arm", "latent_sweep", "beta_sweep", "seed",
                      "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon",
                      "batch_size"});
  detail::get_if(j, "folds", config.folds);
  detail::get_if(j, "epochs", config.epochs);
  if (j.contains("arm")) config.arm = augment_arm_from_string(j.at("arm").get<std::string>());
  detail::get_if(j, "latent_sweep", config.latent_sweep);
  detail::get_if(j, "beta_sweep", config.beta_sweep);
  detail::get_if(j, "seed", config.seed);
  detail::get_if(j, "learning_rate", config.settings.learning_rate);
  detail::get_if(j, "adam_beta1", config.settings.beta1);
  detail::get_if(j, "adam_beta2", config.settings.beta2);
  detail::get_if(j, "adam_epsilon", config.settings.epsilon);
  detail::get_if(j, "batch_size", config.settings.batch_size);
  if (config.folds < 2) throw std::invalid_argument("config: folds must be >= 2");
  if (config.latent_sweep.empty() || config.beta_sweep.empty())
    throw std::invalid_argument("config: sweep lists must be non-empty");
  return config;
}

inline AppConfig parse_config(const nlohmann::json& root) {
  detail::check_keys(root, "<root>", {"synthetic", "model", "experiment"});
  AppConfig app;
  if (root.contains("synthetic")) app.synthetic = parse_synthetic_spec(root.at("synthetic"));
  app.experiment = parse_experiment_config(root);
  return app;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  return parse_config(root);
}

}  // namespace meshvae
