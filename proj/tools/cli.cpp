#include "cli.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "ovad/dataset.hpp"
#include "ovad/error.hpp"
#include "ovad/pipeline.hpp"
#include "ovad/synth.hpp"

namespace ovad::cli {

namespace {

// Flags shared by every pipeline stage. Values given here override the
// config file, which overrides built-in defaults.
struct StageOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<double> lambda;
  std::optional<double> sigma;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> state_dim;
  std::optional<std::size_t> clip_length;
  std::optional<std::string> init_mode;
};

void add_stage_options(CLI::App* cmd, StageOptions& o) {
  cmd->add_option("--config", o.config, "key = value or JSON config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override any config key: --set fusion.lambda=0.3");
  cmd->add_option("--data", o.data, "dataset root");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "top-level seed");
  cmd->add_option("--threads", o.threads, "worker threads for scoring (0 = auto)");
  cmd->add_option("--lambda", o.lambda, "static weight in score fusion");
  cmd->add_option("--sigma", o.sigma, "Gaussian smoothing width in frames");
  cmd->add_option("--epochs", o.epochs, "S3M training epochs");
  cmd->add_option("--lr", o.lr, "S3M initial learning rate");
  cmd->add_option("--state-dim", o.state_dim, "S3M state size O");
  cmd->add_option("--clip-length", o.clip_length, "clip length L");
  cmd->add_option("--init-mode", o.init_mode, "gaussian or hippo");
}

PipelineConfig build_config(const StageOptions& o) {
  PipelineConfig cfg;
  if (!o.config.empty())
    for (const auto& [k, v] : read_config_file(o.config)) cfg.set(k, v);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.data) cfg.data = *o.data;
  if (o.out) cfg.out = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.lambda) cfg.fusion.lambda = *o.lambda;
  if (o.sigma) cfg.fusion.sigma = *o.sigma;
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.lr) cfg.train.lr0 = *o.lr;
  if (o.state_dim) cfg.state_dim = *o.state_dim;
  if (o.clip_length) cfg.clip_length = *o.clip_length;
  if (o.init_mode) cfg.set("s3m.init_mode", *o.init_mode);
  cfg.validate();
  return cfg;
}

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 7;
  std::optional<std::size_t> videos, train, objects, dim, windows;
  std::optional<std::int64_t> frames, window_length;
  std::optional<double> noise;
};

SynthConfig build_synth(const SynthOptions& o) {
  SynthConfig cfg;
  cfg.seed = o.seed;
  if (o.videos) cfg.n_videos = *o.videos;
  if (o.train) cfg.n_train = *o.train;
  if (o.objects) cfg.objects_per_video = *o.objects;
  if (o.dim) cfg.dim = *o.dim;
  if (o.windows) cfg.n_windows = *o.windows;
  if (o.frames) cfg.frames_per_video = *o.frames;
  if (o.window_length) cfg.window_length = *o.window_length;
  if (o.noise) cfg.noise_std = *o.noise;
  return cfg;
}

void setup_logging() {
  static auto logger = [] {
    auto l = spdlog::stderr_color_mt("ovad");
    l->set_pattern("[%l] %v");
    spdlog::set_default_logger(l);
    return l;
  }();
  const char* level = std::getenv("OVAD_LOG_LEVEL");
  logger->set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

void print_report(const EvalReport& r) {
  std::cout << "micro_auc " << r.micro_auc << "\nmacro_auc " << r.macro_auc << "\nap "
            << r.ap << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
  setup_logging();

  CLI::App app{"Object-level video anomaly detection from precomputed detections"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string validate_data;
  auto* validate = app.add_subcommand("validate", "load and check a dataset root");
  validate->add_option("--data", validate_data, "dataset root")->required();

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  synth->add_option("--out", so.out, "dataset root to write")->required();
  synth->add_option("--seed", so.seed, "generator seed");
  synth->add_option("--videos", so.videos, "total videos");
  synth->add_option("--train", so.train, "training videos (anomaly free)");
  synth->add_option("--frames", so.frames, "frames per video");
  synth->add_option("--objects", so.objects, "objects per video");
  synth->add_option("--dim", so.dim, "feature dimension");
  synth->add_option("--noise", so.noise, "feature innovation std");
  synth->add_option("--windows", so.windows, "number of anomaly windows");
  synth->add_option("--window-length", so.window_length, "frames per anomaly window");

  StageOptions stage;
  auto* track = app.add_subcommand("track", "associate detections into tracks");
  auto* spa_fit = app.add_subcommand("spa-fit", "fit caption answer distributions, pick a prompt");
  auto* s3m_train = app.add_subcommand("s3m-train", "train the temporal model on normal clips");
  auto* score = app.add_subcommand("score", "score test videos");
  auto* eval = app.add_subcommand("eval", "evaluate scores against frame labels");
  auto* run_all = app.add_subcommand("run", "all stages: track, spa-fit, s3m-train, score, eval");
  for (auto* cmd : {track, spa_fit, s3m_train, score, eval, run_all})
    add_stage_options(cmd, stage);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (validate->parsed()) {
      const Dataset ds = load_dataset(validate_data);
      std::size_t detections = 0;
      for (const auto* split : {&ds.train, &ds.test})
        for (const auto& v : *split) detections += v.detections.size();
      std::cout << "ok: " << ds.train.size() << " train videos, " << ds.test.size()
                << " test videos, " << detections << " detections, feature dim "
                << ds.feature_dim() << ", " << ds.pool.prompts.size() << " prompts\n";
      return kOk;
    }
    if (synth->parsed()) {
      const SynthConfig cfg = build_synth(so);
      const SynthGroundTruth gt = generate(cfg, so.out);
      spdlog::info("wrote {} train and {} test videos to {}", gt.train_ids.size(),
                   gt.test_ids.size(), so.out);
      return kOk;
    }

    const PipelineConfig cfg = build_config(stage);
    if (track->parsed()) {
      run_track_stage(cfg);
      spdlog::info("tracks written to {}", (cfg.out / "track").string());
    } else if (spa_fit->parsed()) {
      const SpaModel m = run_spa_stage(cfg);
      spdlog::info("selected prompt '{}'", m.selected);
    } else if (s3m_train->parsed()) {
      const TrainResult r = run_s3m_stage(cfg);
      spdlog::info("trained {} epochs, final loss {:.6g}", r.epoch_loss.size(),
                   r.epoch_loss.back());
    } else if (score->parsed()) {
      const auto scores = run_score_stage(cfg);
      spdlog::info("scored {} videos", scores.size());
    } else if (eval->parsed()) {
      print_report(run_eval_stage(cfg));
    } else if (run_all->parsed()) {
      print_report(run_pipeline(cfg));
    }
    return kOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace ovad::cli
