#include "ovad/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "ovad/error.hpp"

namespace ovad {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  // FNV-1a over the label, mixed with the seed through seed_seq, whose output
  // is fixed by the standard.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("invalid value '" + value + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("invalid boolean '" + value + "' for " + key);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto real = [&] { return parse_number<double>(key, value); };
  auto size = [&] { return parse_number<std::size_t>(key, value); };

  if (key == "data") data = value;
  else if (key == "out") out = value;
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "threads") threads = size();
  else if (key == "tracker.conf_high") tracker.conf_high = real();
  else if (key == "tracker.conf_low") tracker.conf_low = real();
  else if (key == "tracker.iou_min") tracker.iou_min = real();
  else if (key == "clip.length") clip_length = size();
  else if (key == "clip.stride") clip_stride = size();
  else if (key == "spa.alpha") spa.alpha = real();
  else if (key == "spa.normalize") spa.normalize = parse_bool(key, value);
  else if (key == "s3m.state_dim") state_dim = size();
  else if (key == "s3m.epochs") train.epochs = parse_number<int>(key, value);
  else if (key == "s3m.lr") train.lr0 = real();
  else if (key == "s3m.lr_decay") train.lr_decay = real();
  else if (key == "s3m.init_std") train.init_std = real();
  else if (key == "s3m.grad_clip") train.grad_clip_norm = real();
  else if (key == "s3m.hippo_dt") {
    if (value == "auto") hippo_dt.reset();
    else hippo_dt = real();
  } else if (key == "s3m.init_mode") {
    if (value == "gaussian") train.init_mode = InitMode::gaussian;
    else if (value == "hippo") train.init_mode = InitMode::hippo;
    else throw ConfigError("s3m.init_mode must be gaussian or hippo");
  } else if (key == "s3m.optimizer") {
    if (value == "adam") train.optimizer = OptimizerKind::adam;
    else if (value == "sgd") train.optimizer = OptimizerKind::sgd;
    else throw ConfigError("s3m.optimizer must be adam or sgd");
  } else if (key == "fusion.lambda") fusion.lambda = real();
  else if (key == "fusion.sigma") fusion.sigma = real();
  else throw ConfigError("unknown configuration key '" + key + "'");
}

std::map<std::string, std::string> PipelineConfig::to_map() const {
  return {
      {"data", data.string()},
      {"out", out.string()},
      {"seed", std::to_string(seed)},
      {"threads", std::to_string(threads)},
      {"tracker.conf_high", format_double(tracker.conf_high)},
      {"tracker.conf_low", format_double(tracker.conf_low)},
      {"tracker.iou_min", format_double(tracker.iou_min)},
      {"clip.length", std::to_string(clip_length)},
      {"clip.stride", std::to_string(clip_stride)},
      {"spa.alpha", format_double(spa.alpha)},
      {"spa.normalize", spa.normalize ? "true" : "false"},
      {"s3m.state_dim", std::to_string(state_dim)},
      {"s3m.epochs", std::to_string(train.epochs)},
      {"s3m.lr", format_double(train.lr0)},
      {"s3m.lr_decay", format_double(train.lr_decay)},
      {"s3m.init_std", format_double(train.init_std)},
      {"s3m.grad_clip", format_double(train.grad_clip_norm)},
      {"s3m.hippo_dt", hippo_dt ? format_double(*hippo_dt) : std::string("auto")},
      {"s3m.init_mode", train.init_mode == InitMode::hippo ? "hippo" : "gaussian"},
      {"s3m.optimizer", train.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
      {"fusion.lambda", format_double(fusion.lambda)},
      {"fusion.sigma", format_double(fusion.sigma)},
  };
}

TrainConfig PipelineConfig::effective_train() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, "s3m");
  t.hippo_dt = hippo_dt.value_or(1.0 / static_cast<double>(std::max<std::size_t>(clip_length, 1)));
  return t;
}

void PipelineConfig::validate() const {
  tracker.validate();
  if (clip_length < 2) throw ConfigError("clip.length must be >= 2");
  if (clip_stride < 1) throw ConfigError("clip.stride must be >= 1");
  if (!(spa.alpha >= 0.0)) throw ConfigError("spa.alpha must be >= 0");
  if (state_dim < 1) throw ConfigError("s3m.state_dim must be >= 1");
  effective_train().validate();
  fusion.validate();
}

std::map<std::string, std::string> read_config_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  std::map<std::string, std::string> out;

  if (trim(text).starts_with("{")) {
    try {
      const json j = json::parse(text);
      if (!j.is_object()) throw ConfigError(file.string() + ": JSON config must be an object");
      for (const auto& [k, v] : j.items())
        out[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } catch (const json::exception& e) {
      throw ConfigError(file.string() + ": malformed JSON config: " + e.what());
    }
    return out;
  }

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": expected key = value");
    out[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

void write_effective_config(const PipelineConfig& cfg, const fs::path& file) {
  fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << json(cfg.to_map()).dump(2) << "\n";
}

std::vector<std::vector<Track>> track_videos(const std::vector<VideoManifest>& videos,
                                             const TrackerConfig& cfg) {
  std::vector<std::vector<Track>> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(build_tracks(v, cfg));
  return out;
}

std::vector<FeatureSequence> collect_clips(const std::vector<VideoManifest>& videos,
                                           const std::vector<std::vector<Track>>& tracks,
                                           std::size_t length, std::size_t stride) {
  std::vector<FeatureSequence> out;
  for (std::size_t v = 0; v < videos.size(); ++v)
    for (const auto& t : tracks.at(v))
      for (auto& c : segment_clips(t, videos[v], length, stride))
        out.push_back(std::move(c.features));
  return out;
}

ScoreSeries static_series(const VideoManifest& video, const SpaModel& spa) {
  std::vector<std::pair<std::int64_t, double>> obs;
  obs.reserve(video.detections.size());
  for (const auto& d : video.detections) obs.emplace_back(d.frame, spa.score(d));
  return pool_frames(video.video_id, video.frame_count, obs, ScoreKind::static_caption);
}

ScoreSeries temporal_series(const VideoManifest& video, const std::vector<Track>& tracks,
                            const S3MParams& params, std::size_t length, std::size_t stride) {
  // Max over clips and objects at a frame is one max over all observations.
  std::vector<std::pair<std::int64_t, double>> obs;
  for (const auto& t : tracks) {
    for (const auto& clip : segment_clips(t, video, length, stride)) {
      const Eigen::VectorXd s = temporal_score(params, clip.features);
      for (Eigen::Index k = 0; k < s.size(); ++k)
        obs.emplace_back(clip.start_frame + k + 1, s(k));
    }
  }
  return pool_frames(video.video_id, video.frame_count, obs, ScoreKind::temporal);
}

VideoScores score_video(const VideoManifest& video, const std::vector<Track>& tracks,
                        const SpaModel& spa, const S3MParams& params,
                        const PipelineConfig& cfg) {
  return combine_scores(static_series(video, spa),
                        temporal_series(video, tracks, params, cfg.clip_length, cfg.clip_stride),
                        cfg.fusion);
}

std::vector<VideoScores> score_videos(const std::vector<VideoManifest>& videos,
                                      const std::vector<std::vector<Track>>& tracks,
                                      const SpaModel& spa, const S3MParams& params,
                                      const PipelineConfig& cfg) {
  std::vector<VideoScores> out(videos.size());
  std::vector<std::exception_ptr> errors(videos.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < videos.size(); i = next++) {
      try {
        out[i] = score_video(videos[i], tracks.at(i), spa, params, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t n_threads = cfg.threads ? cfg.threads : std::thread::hardware_concurrency();
  n_threads = std::clamp<std::size_t>(n_threads, 1, std::max<std::size_t>(videos.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<LabeledScores> labeled_final_scores(const std::vector<VideoManifest>& videos,
                                                const std::vector<VideoScores>& scores) {
  std::vector<LabeledScores> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (!videos[i].labels) throw DataError(videos[i].video_id + ": labels required");
    out.push_back({videos[i].video_id, scores.at(i).final_scores.values, *videos[i].labels});
  }
  return out;
}

void validate_tracks(const std::vector<Track>& tracks, const VideoManifest& video) {
  std::vector<bool> used(video.detections.size(), false);
  for (const auto& t : tracks) {
    for (const auto& e : t.entries) {
      if (e.detection >= video.detections.size() ||
          video.detections[e.detection].frame != e.frame)
        throw DataError(video.video_id + ": track " + std::to_string(t.track_id) +
                        " does not match the video's detections");
      if (used[e.detection])
        throw DataError(video.video_id + ": detection " + std::to_string(e.detection) +
                        " appears in two tracks");
      used[e.detection] = true;
    }
  }
}

namespace {

fs::path tracks_path(const PipelineConfig& cfg, const char* split, const std::string& id) {
  return cfg.out / "track" / split / id / kTracksFile;
}

std::vector<std::vector<Track>> load_split_tracks(const PipelineConfig& cfg, const char* split,
                                                  const std::vector<VideoManifest>& videos) {
  std::vector<std::vector<Track>> out;
  for (const auto& v : videos) {
    const fs::path p = tracks_path(cfg, split, v.video_id);
    if (!fs::exists(p)) throw DataError(p.string() + " missing: run the track stage first");
    out.push_back(load_tracks(p));
    validate_tracks(out.back(), v);
  }
  return out;
}

Dataset load_for(const PipelineConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no dataset root given");
  return load_dataset(cfg.data);
}

}  // namespace

void run_track_stage(const PipelineConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  for (const auto& [split, videos] :
       {std::pair{"train", &ds.train}, std::pair{"test", &ds.test}}) {
    for (const auto& v : *videos) {
      const fs::path p = tracks_path(cfg, split, v.video_id);
      fs::create_directories(p.parent_path());
      save_tracks(build_tracks(v, cfg.tracker), p);
    }
  }
}

SpaModel run_spa_stage(const PipelineConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  std::vector<Detection> detections;
  for (const auto& v : ds.train)
    detections.insert(detections.end(), v.detections.begin(), v.detections.end());
  SpaModel model = fit_spa(ds.pool, detections, cfg.spa);
  fs::create_directories(cfg.out / "spa");
  save_spa_model(model, cfg.out / "spa" / kSpaModelFile);
  return model;
}

TrainResult run_s3m_stage(const PipelineConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  const auto tracks = load_split_tracks(cfg, "train", ds.train);
  const auto clips = collect_clips(ds.train, tracks, cfg.clip_length, cfg.clip_stride);
  if (clips.empty()) throw DataError("no training clips: tracks are shorter than clip.length");
  TrainResult result = train(clips, cfg.state_dim, cfg.effective_train());

  const fs::path dir = cfg.out / "s3m";
  fs::create_directories(dir);
  save_s3m(result.params, dir / kS3MModelFile);
  std::ofstream log(dir / "loss.csv", std::ios::binary | std::ios::trunc);
  log << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e + 1, result.epoch_loss[e]);
    log << buf;
  }
  return result;
}

std::vector<VideoScores> run_score_stage(const PipelineConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  const auto tracks = load_split_tracks(cfg, "test", ds.test);
  const SpaModel spa = load_spa_model(cfg.out / "spa" / kSpaModelFile);
  const S3MParams params = load_s3m(cfg.out / "s3m" / kS3MModelFile);
  if (params.feature_dim() != ds.feature_dim())
    throw DataError("model feature dim " + std::to_string(params.feature_dim()) +
                    " does not match dataset dim " + std::to_string(ds.feature_dim()));
  auto scores = score_videos(ds.test, tracks, spa, params, cfg);
  for (const auto& s : scores) {
    const fs::path dir = cfg.out / "score" / s.video_id;
    fs::create_directories(dir);
    write_scores_csv(s, dir / kScoresFile);
  }
  return scores;
}

EvalReport run_eval_stage(const PipelineConfig& cfg) {
  cfg.validate();
  const Dataset ds = load_for(cfg);
  if (ds.test.empty()) throw DataError("no test videos to evaluate");
  std::vector<LabeledScores> labeled;
  for (const auto& v : ds.test) {
    if (!v.labels) throw DataError(v.video_id + ": labels required");
    const VideoScores s = read_scores_csv(cfg.out / "score" / v.video_id / kScoresFile, v.video_id);
    if (s.final_scores.size() != v.labels->size())
      throw DataError(v.video_id + ": score and label lengths differ");
    labeled.push_back({v.video_id, s.final_scores.values, *v.labels});
  }
  EvalReport report = evaluate(labeled);
  const fs::path dir = cfg.out / "eval";
  fs::create_directories(dir);
  write_report_json(report, dir / "report.json");
  write_roc_csv(report, dir / "roc.csv");
  return report;
}

EvalReport run_pipeline(const PipelineConfig& cfg) {
  cfg.validate();
  write_effective_config(cfg, cfg.out / "effective_config.json");
  run_track_stage(cfg);
  run_spa_stage(cfg);
  run_s3m_stage(cfg);
  run_score_stage(cfg);
  return run_eval_stage(cfg);
}

}  // namespace ovad
