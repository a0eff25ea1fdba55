#pragma once

// Declarative run configuration for the command-line pipeline.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "cgg/error.hpp"
#include "cgg/json_io.hpp"

namespace cgg {

struct RunPaths {
  std::string data_root;      // recordings (synth writes here if output_dir is empty)
  std::string manifest;       // defaults to <data_root>/manifest.json, else directory scan
  std::string processed_dir;  // preprocess output; defaults to output_dir
  std::string output_dir = "out";
  std::string checkpoint;     // defaults to <output_dir>/checkpoint.bin

  bool operator==(const RunPaths&) const = default;
};

struct PreprocessSection {
  int window = kCycleRows;
  SplitRatios ratios{0.70, 0.15, 0.15};
  std::uint64_t seed = 0;
  SplitMode split_mode = SplitMode::sample_level;
  std::string adjacency;  // edge-list file; empty selects the built-in graph

  bool operator==(const PreprocessSection&) const = default;
};

struct EvaluateSection {
  double threshold = 0.5;
  std::string split = "test";

  bool operator==(const EvaluateSection&) const = default;
};

struct ExplainSection {
  std::string split = "test";
  int max_samples = 0;  // 0 = every sample in the split
  bool group_by_severity = true;
  bool embeddings = false;

  bool operator==(const ExplainSection&) const = default;
};

struct GradcheckSection {
  int seeds = 10;
  double tolerance = 1e-4;

  bool operator==(const GradcheckSection&) const = default;
};

struct RunConfig {
  RunPaths paths;
  SynthConfig synth;
  PreprocessSection preprocess;
  nn::ModelConfig model;
  bool model_given = false;  // a "model" section was present in the file
  TrainConfig train;
  EvaluateSection evaluate;
  ExplainSection explain;
  GradcheckSection gradcheck;

  // Sets every seed (data, split, init, shuffle, dropout) to `seed`.
  void override_seeds(std::uint64_t seed) {
    synth.seed = seed;
    preprocess.seed = seed;
    model.init_seed = seed;
    train.seed = seed;
    train.dropout_seed = seed;
  }

  std::filesystem::path processed_dir() const {
    return paths.processed_dir.empty() ? std::filesystem::path(paths.output_dir) : std::filesystem::path(paths.processed_dir);
  }

  std::filesystem::path checkpoint_path() const {
    return paths.checkpoint.empty() ? std::filesystem::path(paths.output_dir) / "checkpoint.bin"
                                    : std::filesystem::path(paths.checkpoint);
  }

  void validate() const {
    synth.validate();
    model.validate();
    train.validate();
    if (paths.output_dir.empty()) throw ValidationError("paths.output_dir must not be empty");
    if (preprocess.window <= 0) throw ValidationError("preprocess.window must be positive");
    split_sizes(1, preprocess.ratios);
    if (!std::isfinite(evaluate.threshold) || evaluate.threshold < 0.0 || evaluate.threshold > 1.0)
      throw ValidationError("evaluate.threshold must lie in [0,1]");
    for (const auto* s : {&evaluate.split, &explain.split})
      if (*s != "train" && *s != "val" && *s != "test" && *s != "all")
        throw ValidationError("unknown split '" + *s + "' (expected train, val, test or all)");
    if (explain.max_samples < 0) throw ValidationError("explain.max_samples must be >= 0");
    if (gradcheck.seeds < 1) throw ValidationError("gradcheck.seeds must be >= 1");
    if (!(gradcheck.tolerance > 0.0)) throw ValidationError("gradcheck.tolerance must be > 0");
  }
};

inline json to_json(const RunConfig& c) {
  json j;
  j["paths"] = {{"data_root", c.paths.data_root},
                {"manifest", c.paths.manifest},
                {"processed_dir", c.paths.processed_dir},
                {"output_dir", c.paths.output_dir},
                {"checkpoint", c.paths.checkpoint}};
  j["synth"] = to_json(c.synth);
  j["preprocess"] = {{"window", c.preprocess.window},
                     {"ratios", c.preprocess.ratios},
                     {"seed", c.preprocess.seed},
                     {"split_mode", split_mode_name(c.preprocess.split_mode)},
                     {"adjacency", c.preprocess.adjacency}};
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["evaluate"] = {{"threshold", c.evaluate.threshold}, {"split", c.evaluate.split}};
  j["explain"] = {{"split", c.explain.split},
                  {"max_samples", c.explain.max_samples},
                  {"group_by_severity", c.explain.group_by_severity},
                  {"embeddings", c.explain.embeddings}};
  j["gradcheck"] = {{"seeds", c.gradcheck.seeds}, {"tolerance", c.gradcheck.tolerance}};
  return j;
}

inline RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"paths", "synth", "preprocess", "model", "train", "evaluate", "explain", "gradcheck"},
                      "config");
  RunConfig c;
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    const std::string w = "paths";
    reject_unknown_keys(p, {"data_root", "manifest", "processed_dir", "output_dir", "checkpoint"}, w);
    read_opt(p, "data_root", c.paths.data_root, w);
    read_opt(p, "manifest", c.paths.manifest, w);
    read_opt(p, "processed_dir", c.paths.processed_dir, w);
    read_opt(p, "output_dir", c.paths.output_dir, w);
    read_opt(p, "checkpoint", c.paths.checkpoint, w);
  }
  if (j.contains("synth")) c.synth = synth_config_from_json(j["synth"]);
  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    const std::string w = "preprocess";
    reject_unknown_keys(p, {"window", "ratios", "seed", "split_mode", "adjacency"}, w);
    read_opt(p, "window", c.preprocess.window, w);
    read_opt(p, "ratios", c.preprocess.ratios, w);
    read_opt(p, "seed", c.preprocess.seed, w);
    std::string mode = split_mode_name(c.preprocess.split_mode);
    read_opt(p, "split_mode", mode, w);
    c.preprocess.split_mode = split_mode_from_name(mode);
    read_opt(p, "adjacency", c.preprocess.adjacency, w);
  }
  if (j.contains("model")) {
    c.model = model_config_from_json(j["model"]);
    c.model_given = true;
  }
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("evaluate")) {
    const auto& e = j["evaluate"];
    reject_unknown_keys(e, {"threshold", "split"}, "evaluate");
    read_opt(e, "threshold", c.evaluate.threshold, "evaluate");
    read_opt(e, "split", c.evaluate.split, "evaluate");
  }
  if (j.contains("explain")) {
    const auto& e = j["explain"];
    reject_unknown_keys(e, {"split", "max_samples", "group_by_severity", "embeddings"}, "explain");
    read_opt(e, "split", c.explain.split, "explain");
    read_opt(e, "max_samples", c.explain.max_samples, "explain");
    read_opt(e, "group_by_severity", c.explain.group_by_severity, "explain");
    read_opt(e, "embeddings", c.explain.embeddings, "explain");
  }
  if (j.contains("gradcheck")) {
    const auto& g = j["gradcheck"];
    reject_unknown_keys(g, {"seeds", "tolerance"}, "gradcheck");
    read_opt(g, "seeds", c.gradcheck.seeds, "gradcheck");
    read_opt(g, "tolerance", c.gradcheck.tolerance, "gradcheck");
  }
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("config " + path.string() + ": " + ex.what());
  }
  return run_config_from_json(j);
}

}  // namespace cgg
