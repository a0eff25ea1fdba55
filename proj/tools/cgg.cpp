#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cgg/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string adjacency;
  std::string split_mode;
  std::optional<double> threshold;
};

cgg::RunConfig effective_config(const Overrides& o) {
  cgg::RunConfig cfg = o.config.empty() ? cgg::RunConfig{} : cgg::load_run_config(o.config);
  if (!o.out.empty()) cfg.paths.output_dir = o.out;
  if (!o.checkpoint.empty()) cfg.paths.checkpoint = o.checkpoint;
  if (o.seed) cfg.override_seeds(*o.seed);
  if (!o.adjacency.empty()) cfg.preprocess.adjacency = o.adjacency;
  if (!o.split_mode.empty()) cfg.preprocess.split_mode = cgg::split_mode_from_name(o.split_mode);
  if (o.threshold) cfg.evaluate.threshold = *o.threshold;
  cfg.validate();
  return cfg;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("cgg");
  logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("CGG_LOG")) {
    const auto lvl = spdlog::level::from_str(env);
    if (lvl == spdlog::level::off && std::string(env) != "off")
      spdlog::warn("CGG_LOG='{}' not recognised; using info", env);
    else
      spdlog::set_level(lvl);
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Gait-cycle graph network for Parkinson's disease detection from foot-pressure recordings"};
  app.require_subcommand(1);

  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Override every seed in the config");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic recording catalog");
  auto* prep = app.add_subcommand("preprocess", "Normalise, segment and split recordings");
  auto* train = app.add_subcommand("train", "Train the network on preprocessed data");
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a data split");
  auto* explain = app.add_subcommand("explain", "Export per-node importance for samples");
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
  for (auto* s : {synth, prep, train, eval, explain, grad}) add_common(s);
  for (auto* s : {prep, train})
    s->add_option("--adjacency", o.adjacency, "Edge-list file replacing the built-in sensor graph")
        ->check(CLI::ExistingFile);
  prep->add_option("--split-mode", o.split_mode, "Split granularity")->check(CLI::IsMember({"sample", "subject"}));
  for (auto* s : {eval, explain}) s->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
  eval->add_option("--threshold", o.threshold, "Decision threshold on P(PD)")->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);

  const auto log = [](const std::string& msg) { spdlog::info("{}", msg); };
  try {
    const auto cfg = effective_config(o);
    spdlog::debug("effective config: {}", cgg::to_json(cfg).dump());
    if (synth->parsed()) {
      cgg::pipeline::run_synth(cfg, log);
    } else if (prep->parsed()) {
      cgg::pipeline::run_preprocess(cfg, log);
    } else if (train->parsed()) {
      cgg::pipeline::run_train(cfg, log);
    } else if (eval->parsed()) {
      cgg::pipeline::run_evaluate(cfg, log);
    } else if (explain->parsed()) {
      cgg::pipeline::run_explain(cfg, log);
    } else if (grad->parsed()) {
      if (!cgg::pipeline::run_gradcheck(cfg, log).passed) {
        spdlog::error("gradient check failed");
        return 1;
      }
    }
  } catch (const cgg::TrainingDiverged& ex) {
    spdlog::error("{} (last good parameters saved as checkpoint_last_good.bin)", ex.what());
    return 3;
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    return 2;
  }
  return 0;
}
