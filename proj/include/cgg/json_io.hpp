#pragma once

// JSON forms of the configuration and metadata types. Readers reject
// unknown keys and fill omitted ones from defaults.

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "cgg/error.hpp"
#include "cgg/gaitdata.hpp"
#include "cgg/nn/model.hpp"
#include "cgg/preprocess.hpp"
#include "cgg/training.hpp"

namespace cgg {

using json = nlohmann::ordered_json;

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, _] : j.items())
    if (!ok.count(k)) throw ValidationError(where + ": unknown key '" + k + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(where + "." + key + ": " + ex.what());
  }
}

// --- ModelConfig

inline json to_json(const nn::ModelConfig& c) {
  return {{"in_channels", c.in_channels},   {"conv_channels", c.conv_channels},
          {"kernel_size", c.kernel_size},   {"gru_hidden", c.gru_hidden},
          {"gru_layers", c.gru_layers},     {"gat_dim", c.gat_dim},
          {"gat_layers", c.gat_layers},     {"leaky_slope", c.leaky_slope},
          {"dropout", c.dropout},           {"n_nodes", c.n_nodes},
          {"seq_len", c.seq_len},           {"init_seed", c.init_seed},
          {"precision", c.use_float32 ? "float32" : "float64"}};
}

inline nn::ModelConfig model_config_from_json(const json& j, nn::ModelConfig c = {}) {
  const std::string w = "model";
  reject_unknown_keys(j, {"in_channels", "conv_channels", "kernel_size", "gru_hidden", "gru_layers", "gat_dim",
                          "gat_layers", "leaky_slope", "dropout", "n_nodes", "seq_len", "init_seed", "precision"},
                      w);
  read_opt(j, "in_channels", c.in_channels, w);
  read_opt(j, "conv_channels", c.conv_channels, w);
  read_opt(j, "kernel_size", c.kernel_size, w);
  read_opt(j, "gru_hidden", c.gru_hidden, w);
  read_opt(j, "gru_layers", c.gru_layers, w);
  read_opt(j, "gat_dim", c.gat_dim, w);
  read_opt(j, "gat_layers", c.gat_layers, w);
  read_opt(j, "leaky_slope", c.leaky_slope, w);
  read_opt(j, "dropout", c.dropout, w);
  read_opt(j, "n_nodes", c.n_nodes, w);
  read_opt(j, "seq_len", c.seq_len, w);
  read_opt(j, "init_seed", c.init_seed, w);
  std::string precision = c.use_float32 ? "float32" : "float64";
  read_opt(j, "precision", precision, w);
  if (precision != "float32" && precision != "float64")
    throw ValidationError("model.precision must be float32 or float64");
  c.use_float32 = precision == "float32";
  c.validate();
  return c;
}

// --- TrainConfig

inline json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed},
          {"dropout_seed", c.dropout_seed},
          {"shuffle", c.shuffle},
          {"checkpoint_every", c.checkpoint_every},
          {"micro_batch", c.micro_batch}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
  const std::string w = "train";
  reject_unknown_keys(j, {"batch_size", "epochs", "learning_rate", "beta1", "beta2", "epsilon", "seed",
                          "dropout_seed", "shuffle", "checkpoint_every", "micro_batch"},
                      w);
  read_opt(j, "batch_size", c.batch_size, w);
  read_opt(j, "epochs", c.epochs, w);
  read_opt(j, "learning_rate", c.learning_rate, w);
  read_opt(j, "beta1", c.beta1, w);
  read_opt(j, "beta2", c.beta2, w);
  read_opt(j, "epsilon", c.epsilon, w);
  read_opt(j, "seed", c.seed, w);
  read_opt(j, "dropout_seed", c.dropout_seed, w);
  read_opt(j, "shuffle", c.shuffle, w);
  read_opt(j, "checkpoint_every", c.checkpoint_every, w);
  read_opt(j, "micro_batch", c.micro_batch, w);
  c.validate();
  return c;
}

// --- SynthConfig

inline json to_json(const SynthConfig& c) {
  return {{"n_subjects_per_class", c.n_subjects_per_class},
          {"rows_per_subject", c.rows_per_subject},
          {"cycle_period_rows", c.cycle_period_rows},
          {"class_separation", c.class_separation},
          {"noise_std", c.noise_std},
          {"seed", c.seed}};
}

inline SynthConfig synth_config_from_json(const json& j, SynthConfig c = {}) {
  const std::string w = "synth";
  reject_unknown_keys(
      j, {"n_subjects_per_class", "rows_per_subject", "cycle_period_rows", "class_separation", "noise_std", "seed"}, w);
  read_opt(j, "n_subjects_per_class", c.n_subjects_per_class, w);
  read_opt(j, "rows_per_subject", c.rows_per_subject, w);
  read_opt(j, "cycle_period_rows", c.cycle_period_rows, w);
  read_opt(j, "class_separation", c.class_separation, w);
  read_opt(j, "noise_std", c.noise_std, w);
  read_opt(j, "seed", c.seed, w);
  c.validate();
  return c;
}

// --- NormStats

inline json to_json(const NormStats& s) {
  return {{"min", s.min}, {"max", s.max}, {"fitted_on", s.fitted_on}};
}

inline NormStats norm_stats_from_json(const json& j) {
  reject_unknown_keys(j, {"min", "max", "fitted_on"}, "norm_stats");
  NormStats s;
  try {
    const auto mn = j.at("min").get<std::vector<double>>();
    const auto mx = j.at("max").get<std::vector<double>>();
    if (mn.size() != kChannels || mx.size() != kChannels)
      throw ValidationError("norm_stats: min and max need 16 entries");
    std::copy(mn.begin(), mn.end(), s.min.begin());
    std::copy(mx.begin(), mx.end(), s.max.begin());
    if (j.contains("fitted_on")) s.fitted_on = j.at("fitted_on").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("norm_stats: ") + ex.what());
  }
  for (int k = 0; k < kChannels; ++k)
    if (!(s.min[k] <= s.max[k]) || !std::isfinite(s.min[k]) || !std::isfinite(s.max[k]))
      throw ValidationError("norm_stats: invalid range for sensor " + std::to_string(k));
  return s;
}

// --- SensorGraph

inline json to_json(const SensorGraph& g) {
  json edges = json::array();
  for (auto [a, b] : g.edges) edges.push_back({a, b});
  return {{"n_nodes", g.n_nodes}, {"edges", edges}};
}

inline SensorGraph sensor_graph_from_json(const json& j) {
  reject_unknown_keys(j, {"n_nodes", "edges"}, "graph");
  try {
    return make_sensor_graph(j.at("n_nodes").get<int>(), j.at("edges").get<std::vector<std::pair<int, int>>>());
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("graph: ") + ex.what());
  }
}

// --- GaitCycleSample (one JSON-lines record)

inline json to_json(const GaitCycleSample& s) {
  json j;
  j["subject_id"] = s.subject_id;
  j["cycle_index"] = s.cycle_index;
  j["label"] = s.label;
  json feats = json::array();
  for (Eigen::Index n = 0; n < s.features.rows(); ++n) {
    std::vector<double> row(static_cast<std::size_t>(s.features.cols()));
    for (Eigen::Index t = 0; t < s.features.cols(); ++t) row[static_cast<std::size_t>(t)] = s.features(n, t);
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["cohort"] = std::string(cohort_name(s.cohort));
  if (s.severity) j["severity"] = severity_value(*s.severity);
  return j;
}

inline GaitCycleSample sample_from_json(const json& j) {
  reject_unknown_keys(j, {"subject_id", "cycle_index", "label", "features", "cohort", "severity"}, "sample");
  GaitCycleSample s;
  try {
    s.subject_id = j.at("subject_id").get<std::string>();
    s.cycle_index = j.at("cycle_index").get<int>();
    s.label = j.at("label").get<int>();
    const auto rows = j.at("features").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw ValidationError("sample: empty features");
    const auto len = rows.front().size();
    s.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(len));
    for (std::size_t n = 0; n < rows.size(); ++n) {
      if (rows[n].size() != len) throw ValidationError("sample: ragged feature matrix");
      for (std::size_t t = 0; t < len; ++t) {
        const double v = rows[n][t];
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("sample: feature outside [0,1]");
        s.features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(t)) = v;
      }
    }
    if (j.contains("cohort")) s.cohort = cohort_from_name(j.at("cohort").get<std::string>());
    if (j.contains("severity") && !j.at("severity").is_null())
      s.severity = severity_from_value(j.at("severity").get<double>());
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("sample: ") + ex.what());
  }
  if (s.label != 0 && s.label != 1) throw ValidationError("sample: label must be 0 or 1");
  return s;
}

inline json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"train_accuracy", r.train_accuracy},
          {"val_loss", r.val_loss},
          {"val_accuracy", r.val_accuracy}};
}

inline json to_json(const TrainHistory& h) {
  json a = json::array();
  for (const auto& r : h) a.push_back(to_json(r));
  return a;
}

}  // namespace cgg
