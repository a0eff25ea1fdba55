#pragma once

// File-level commands behind the command-line tool. Each command reads its
// inputs, writes its artifacts into the configured output directory and
// echoes the effective configuration next to them.

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cgg/checkpoint.hpp"
#include "cgg/error.hpp"
#include "cgg/evaluation.hpp"
#include "cgg/gaitdata.hpp"
#include "cgg/json_io.hpp"
#include "cgg/nn/gradcheck.hpp"
#include "cgg/preprocess.hpp"
#include "cgg/run_config.hpp"
#include "cgg/training.hpp"

namespace cgg::pipeline {

namespace fs = std::filesystem;

using Logger = std::function<void(const std::string&)>;

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed for " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ValidationError(what + " not found: " + p.string());
}

inline void prepare_output(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.paths.output_dir, ec);
  if (ec || !fs::is_directory(cfg.paths.output_dir))
    throw ValidationError("cannot create output directory " + cfg.paths.output_dir);
  write_json(fs::path(cfg.paths.output_dir) / "config.effective.json", to_json(cfg));
}

inline SensorGraph resolve_graph(const RunConfig& cfg) {
  if (cfg.preprocess.adjacency.empty()) return default_sensor_graph();
  return load_edge_list(cfg.preprocess.adjacency, cfg.model.n_nodes);
}

// ---------------------------------------------------------------------------
// synth

struct SynthSummary {
  std::size_t files = 0;
  std::size_t control = 0;
  std::size_t parkinson = 0;
};

inline SynthSummary run_synth(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  prepare_output(cfg);
  const auto recs = generate_synthetic(cfg.synth);
  write_catalog(cfg.paths.output_dir, recs);
  SynthSummary s;
  s.files = recs.size();
  for (const auto& r : recs) (r.meta.label == 1 ? s.parkinson : s.control) += 1;
  if (log)
    log("synth: wrote " + std::to_string(s.files) + " recordings (" + std::to_string(s.control) + " CO, " +
        std::to_string(s.parkinson) + " PD) to " + cfg.paths.output_dir);
  return s;
}

// ---------------------------------------------------------------------------
// preprocess

struct ProcessedData {
  std::vector<GaitCycleSample> samples;
  SplitIndices split;
  NormStats stats;
  SensorGraph graph;
};

inline json split_to_json(const SplitIndices& s, const PreprocessSection& p) {
  return {{"mode", split_mode_name(p.split_mode)},
          {"seed", p.seed},
          {"ratios", p.ratios},
          {"counts", {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}},
          {"train", s.train},
          {"val", s.val},
          {"test", s.test}};
}

inline Manifest resolve_manifest(const RunConfig& cfg) {
  const fs::path root = cfg.paths.data_root;
  if (!cfg.paths.manifest.empty()) return read_manifest(cfg.paths.manifest);
  if (fs::is_regular_file(root / "manifest.json")) return read_manifest(root / "manifest.json");
  return manifest_from_directory(root);
}

inline PreprocessResult run_preprocess(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  if (cfg.paths.data_root.empty() || !fs::is_directory(cfg.paths.data_root))
    throw ValidationError("paths.data_root is not a directory: '" + cfg.paths.data_root + "'");
  if (!cfg.paths.manifest.empty()) require_file(cfg.paths.manifest, "manifest");
  if (!cfg.preprocess.adjacency.empty()) require_file(cfg.preprocess.adjacency, "adjacency file");
  const auto graph = resolve_graph(cfg);
  prepare_output(cfg);

  const auto manifest = resolve_manifest(cfg);
  const auto recordings = load_catalog(cfg.paths.data_root, manifest);
  PreprocessOptions opt;
  opt.window = cfg.preprocess.window;
  opt.ratios = cfg.preprocess.ratios;
  opt.seed = cfg.preprocess.seed;
  opt.mode = cfg.preprocess.split_mode;
  auto res = preprocess(recordings, opt);

  const fs::path out = cfg.paths.output_dir;
  std::ostringstream lines;
  for (const auto& s : res.samples) lines << to_json(s).dump() << '\n';
  write_text(out / "dataset.jsonl", lines.str());
  write_json(out / "split.json", split_to_json(res.split, cfg.preprocess));
  write_json(out / "norm_stats.json", to_json(res.stats));
  std::ostringstream adj;
  write_edge_list(adj, graph);
  write_text(out / "adjacency.txt", adj.str());

  json counts = json::object();
  std::size_t total_co = 0, total_pd = 0;
  for (const auto& [cohort, c] : res.cycle_counts) {
    counts[cohort] = {{"CO", c[0]}, {"PD", c[1]}, {"total", c[0] + c[1]}};
    total_co += c[0];
    total_pd += c[1];
  }
  counts["total"] = {{"CO", total_co}, {"PD", total_pd}, {"total", total_co + total_pd}};
  write_json(out / "preprocess_summary.json",
             {{"recordings", recordings.size()},
              {"samples", res.samples.size()},
              {"split", {{"train", res.split.train.size()}, {"val", res.split.val.size()}, {"test", res.split.test.size()}}},
              {"cycle_counts", counts}});
  if (log) {
    log("preprocess: " + std::to_string(recordings.size()) + " recordings -> " + std::to_string(res.samples.size()) +
        " cycles (train " + std::to_string(res.split.train.size()) + ", val " + std::to_string(res.split.val.size()) +
        ", test " + std::to_string(res.split.test.size()) + ")");
    for (const auto& [cohort, c] : res.cycle_counts)
      log("  " + cohort + ": CO " + std::to_string(c[0]) + ", PD " + std::to_string(c[1]));
  }
  return res;
}

inline std::vector<std::size_t> indices_from_json(const json& j, const char* key, std::size_t n) {
  auto v = j.at(key).get<std::vector<std::size_t>>();
  for (auto i : v)
    if (i >= n) throw ValidationError(std::string("split.json: index out of range in '") + key + "'");
  return v;
}

inline ProcessedData load_processed(const fs::path& dir) {
  for (const char* name : {"dataset.jsonl", "split.json", "norm_stats.json", "adjacency.txt"})
    require_file(dir / name, std::string("preprocessed ") + name);
  ProcessedData d;
  std::ifstream in(dir / "dataset.jsonl");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      d.samples.push_back(sample_from_json(json::parse(line)));
    } catch (const std::exception& ex) {
      throw ParseError(lineno, "dataset.jsonl: " + std::string(ex.what()));
    }
  }
  const auto sj = read_json(dir / "split.json");
  try {
    d.split.train = indices_from_json(sj, "train", d.samples.size());
    d.split.val = indices_from_json(sj, "val", d.samples.size());
    d.split.test = indices_from_json(sj, "test", d.samples.size());
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(std::string("split.json: ") + ex.what());
  }
  d.stats = norm_stats_from_json(read_json(dir / "norm_stats.json"));
  d.graph = load_edge_list(dir / "adjacency.txt");
  return d;
}

inline std::vector<GaitCycleSample> select(const ProcessedData& d, const std::string& split) {
  std::vector<GaitCycleSample> out;
  auto take = [&](const std::vector<std::size_t>& idx) {
    for (auto i : idx) out.push_back(d.samples[i]);
  };
  if (split == "train") take(d.split.train);
  else if (split == "val") take(d.split.val);
  else if (split == "test") take(d.split.test);
  else if (split == "all") out = d.samples;
  else throw ValidationError("unknown split '" + split + "'");
  return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  TrainHistory history;
  std::size_t parameters = 0;
  int best_epoch = 0;
};

namespace detail {

template <class Scalar>
TrainSummary train_typed(const RunConfig& cfg, const ProcessedData& data, const Logger& log) {
  const fs::path out = cfg.paths.output_dir;
  const auto train_set = select(data, "train");
  const auto val_set = select(data, "val");
  auto params = nn::init_params<Scalar>(cfg.model, cfg.model.init_seed);
  TrainSummary sum;
  sum.parameters = nn::param_count(params);
  if (log) log("train: " + std::to_string(sum.parameters) + " parameters, " + std::to_string(train_set.size()) +
               " train / " + std::to_string(val_set.size()) + " val samples");

  double best_acc = -1, best_loss = 0;
  auto on_epoch = [&](const EpochRecord& r, const nn::ModelParams<Scalar>& p) {
    if (r.val_accuracy > best_acc || (r.val_accuracy == best_acc && r.val_loss < best_loss)) {
      best_acc = r.val_accuracy;
      best_loss = r.val_loss;
      sum.best_epoch = r.epoch;
      save_checkpoint(out / "checkpoint_best.bin", p, data.stats, data.graph, cfg.train);
    }
    if (cfg.train.checkpoint_every > 0 && r.epoch % cfg.train.checkpoint_every == 0)
      save_checkpoint(out / ("checkpoint_epoch" + std::to_string(r.epoch) + ".bin"), p, data.stats, data.graph,
                      cfg.train);
    sum.history.push_back(r);
    write_json(out / "history.json", to_json(sum.history));
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %3d  loss %.4f  acc %.4f  val_loss %.4f  val_acc %.4f", r.epoch,
                    r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy);
      log(buf);
    }
  };
  auto on_diverge = [&](const nn::ModelParams<Scalar>& last_good) {
    save_checkpoint(out / "checkpoint_last_good.bin", last_good, data.stats, data.graph, cfg.train);
    write_json(out / "history.json", to_json(sum.history));
  };
  auto res = train(std::move(params), std::span<const GaitCycleSample>(train_set),
                   std::span<const GaitCycleSample>(val_set), data.graph, cfg.train, on_epoch, on_diverge);
  save_checkpoint(out / "checkpoint.bin", res.params, data.stats, data.graph, cfg.train);
  write_json(out / "history.json", to_json(res.history));
  return sum;
}

}  // namespace detail

inline TrainSummary run_train(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto data = load_processed(cfg.processed_dir());
  if (data.graph.n_nodes != cfg.model.n_nodes)
    throw ValidationError("adjacency has " + std::to_string(data.graph.n_nodes) + " nodes but model.n_nodes is " +
                          std::to_string(cfg.model.n_nodes));
  prepare_output(cfg);
  return cfg.model.use_float32 ? detail::train_typed<float>(cfg, data, log)
                               : detail::train_typed<double>(cfg, data, log);
}

// ---------------------------------------------------------------------------
// evaluate / explain

inline Checkpoint open_checkpoint(const RunConfig& cfg) {
  const auto path = cfg.checkpoint_path();
  require_file(path, "checkpoint");
  auto ck = load_checkpoint(path);
  if (cfg.model_given) require_compatible(ck, cfg.model);
  return ck;
}

inline MetricsReport run_evaluate(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto ck = open_checkpoint(cfg);
  const auto data = load_processed(cfg.processed_dir());
  prepare_output(cfg);
  const auto set = select(data, cfg.evaluate.split);
  const auto report = std::visit(
      [&](const auto& p) {
        return evaluate(p, std::span<const GaitCycleSample>(set), ck.graph, cfg.evaluate.threshold, 64);
      },
      ck.params);
  write_json(fs::path(cfg.paths.output_dir) / "metrics.json", to_json(report));
  if (log) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "evaluate (%s, n=%zu): accuracy %.4f precision %.4f recall %.4f f1 %.4f",
                  cfg.evaluate.split.c_str(), report.n, report.accuracy, report.precision, report.recall,
                  report.f1);
    log(buf);
  }
  return report;
}

inline std::string severity_key(const NodeImportance& ni) {
  if (ni.severity) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.1f", severity_value(*ni.severity));
    return buf;
  }
  return ni.label == 1 ? "PD" : "CO";
}

inline std::vector<NodeImportance> run_explain(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  const auto ck = open_checkpoint(cfg);
  const auto data = load_processed(cfg.processed_dir());
  prepare_output(cfg);
  auto set = select(data, cfg.explain.split);
  if (cfg.explain.max_samples > 0 && set.size() > static_cast<std::size_t>(cfg.explain.max_samples))
    set.resize(static_cast<std::size_t>(cfg.explain.max_samples));
  std::vector<NodeImportance> items;
  std::ostringstream lines;
  for (const auto& s : set) {
    items.push_back(std::visit([&](const auto& p) { return node_importance(p, s, ck.graph); }, ck.params));
    auto j = to_json(items.back(), cfg.explain.embeddings);
    j["label"] = s.label;
    j["severity"] = s.severity ? json(severity_value(*s.severity)) : json(nullptr);
    lines << j.dump() << '\n';
  }
  const fs::path out = cfg.paths.output_dir;
  write_text(out / "importance.jsonl", lines.str());
  if (cfg.explain.group_by_severity) {
    json groups = json::array();
    for (const auto& g : group_importance(items, severity_key))
      groups.push_back({{"group", g.key},
                        {"count", g.count},
                        {"mean_importance", g.mean_importance},
                        {"mean_attention_mass", g.mean_attention_mass}});
    write_json(out / "importance_by_severity.json", groups);
  }
  if (log) log("explain: wrote node importance for " + std::to_string(items.size()) + " samples");
  return items;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckSummary {
  std::vector<nn::GradReport> runs;
  bool passed = true;
};

inline GradcheckSummary run_gradcheck(const RunConfig& cfg, const Logger& log = {}) {
  cfg.validate();
  prepare_output(cfg);
  GradcheckSummary sum;
  json layers = json::array();
  for (const auto& layer : nn::grad_check_layers()) {
    double worst = 0;
    std::uint64_t worst_seed = 0;
    for (int s = 0; s < cfg.gradcheck.seeds; ++s) {
      auto rep = nn::grad_check(layer, static_cast<std::uint64_t>(s));
      if (rep.max_rel_err >= worst) {
        worst = rep.max_rel_err;
        worst_seed = rep.seed;
      }
      sum.runs.push_back(std::move(rep));
    }
    const bool ok = worst <= cfg.gradcheck.tolerance;
    sum.passed = sum.passed && ok;
    layers.push_back({{"layer", layer},
                      {"seeds", cfg.gradcheck.seeds},
                      {"max_rel_err", worst},
                      {"worst_seed", worst_seed},
                      {"passed", ok}});
    if (log) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "gradcheck %-10s max_rel_err %.3e  %s", layer.c_str(), worst,
                    ok ? "ok" : "FAILED");
      log(buf);
    }
  }
  json runs = json::array();
  for (const auto& r : sum.runs) runs.push_back(nn::to_json(r));
  write_json(fs::path(cfg.paths.output_dir) / "gradcheck.json",
             {{"tolerance", cfg.gradcheck.tolerance}, {"passed", sum.passed}, {"layers", layers}, {"runs", runs}});
  return sum;
}

}  // namespace cgg::pipeline
