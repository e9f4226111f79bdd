#include "ovad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "json.hpp"
#include "ovad/dataset.hpp"
#include "ovad/error.hpp"

namespace ovad {

namespace fs = std::filesystem;
using nlohmann::json;
using Index = Eigen::Index;

std::string to_string(AnomalyType t) {
  switch (t) {
    case AnomalyType::dynamics: return "dynamics";
    case AnomalyType::caption: return "caption";
    case AnomalyType::both: return "both";
  }
  return "both";
}

AnomalyType parse_anomaly_type(const std::string& s) {
  if (s == "dynamics") return AnomalyType::dynamics;
  if (s == "caption") return AnomalyType::caption;
  if (s == "both") return AnomalyType::both;
  throw ConfigError("unknown anomaly type '" + s + "'");
}

double total_variation(const std::map<std::string, double>& p,
                       const std::map<std::string, double>& q) {
  std::set<std::string> keys;
  for (const auto& [k, v] : p) keys.insert(k);
  for (const auto& [k, v] : q) keys.insert(k);
  double tv = 0.0;
  for (const auto& k : keys) {
    const double a = p.contains(k) ? p.at(k) : 0.0;
    const double b = q.contains(k) ? q.at(k) : 0.0;
    tv += std::abs(a - b);
  }
  return 0.5 * tv;
}

std::vector<SynthPrompt> SynthConfig::default_prompts() {
  const std::map<std::string, double> colors{{"black", 1.0 / 6}, {"blue", 1.0 / 6},
                                             {"gray", 1.0 / 6},  {"green", 1.0 / 6},
                                             {"red", 1.0 / 6},   {"white", 1.0 / 6}};
  const std::map<std::string, double> places{
      {"sidewalk", 0.5}, {"plaza", 0.3}, {"crosswalk", 0.2}};
  return {
      {"activity", "What is the person doing?",
       {{"walking", 0.75}, {"standing", 0.15}, {"sitting", 0.10}},
       {{"running", 0.5}, {"fighting", 0.3}, {"cycling", 0.2}}},
      {"clothing", "What color is the person wearing?", colors, colors},
      {"location", "Where is the person?", places, places},
  };
}

void SynthConfig::validate() const {
  if (n_videos <= n_train) throw ConfigError("synth needs at least one test video");
  if (n_train == 0) throw ConfigError("synth needs at least one training video");
  if (frames_per_video < 2) throw ConfigError("frames_per_video must be >= 2");
  if (objects_per_video == 0) throw ConfigError("objects_per_video must be >= 1");
  if (dim == 0) throw ConfigError("feature dim must be >= 1");
  if (!(noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(spectral_radius > 0.0 && spectral_radius <= 0.9))
    throw ConfigError("dynamics spectral radius must be in (0, 0.9]");
  if (image_width < 1 || image_height < 1) throw ConfigError("image size must be positive");
  if (prompts.empty()) throw ConfigError("synth needs at least one prompt");
  for (const auto& p : prompts) {
    if (p.normal.empty() || p.anomalous.empty())
      throw ConfigError("prompt '" + p.id + "' needs normal and anomalous answers");
    for (const auto* dist : {&p.normal, &p.anomalous}) {
      double sum = 0.0;
      for (const auto& [a, w] : *dist) {
        if (!(w >= 0.0)) throw ConfigError("negative answer probability in '" + p.id + "'");
        sum += w;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("answer probabilities of '" + p.id + "' do not sum to 1");
    }
  }
  for (const auto& w : resolve_windows(*this)) {
    if (w.test_video >= n_test()) throw ConfigError("anomaly window video out of range");
    if (w.object >= objects_per_video) throw ConfigError("anomaly window object out of range");
    if (w.start < 0 || w.end > frames_per_video || w.start >= w.end)
      throw ConfigError("anomaly window frames out of range");
    if (w.has_caption()) {
      double best = 0.0;
      for (const auto& p : prompts) best = std::max(best, total_variation(p.normal, p.anomalous));
      if (best < 0.5)
        throw ConfigError("caption anomalies need answer distributions with TV >= 0.5");
    }
  }
}

std::vector<AnomalyWindow> resolve_windows(const SynthConfig& cfg) {
  if (!cfg.windows.empty() || cfg.n_windows == 0) return cfg.windows;
  const std::size_t n_test = cfg.n_videos > cfg.n_train ? cfg.n_videos - cfg.n_train : 0;
  if (n_test == 0) throw ConfigError("synth needs at least one test video");
  // Separate stream so window placement does not shift with other settings.
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  const std::int64_t margin = std::min<std::int64_t>(20, cfg.frames_per_video / 10);
  const std::int64_t last_start = cfg.frames_per_video - cfg.window_length - margin;
  if (last_start < margin) throw ConfigError("videos too short for the requested windows");
  std::uniform_int_distribution<std::int64_t> start(margin, last_start);
  std::uniform_int_distribution<std::size_t> object(0, cfg.objects_per_video - 1);
  constexpr AnomalyType cycle[] = {AnomalyType::caption, AnomalyType::dynamics,
                                   AnomalyType::both};
  std::vector<AnomalyWindow> out;
  for (std::size_t i = 0; i < cfg.n_windows; ++i) {
    AnomalyWindow w;
    w.test_video = i % n_test;
    w.object = object(rng);
    w.start = start(rng);
    w.end = w.start + cfg.window_length;
    w.type = cycle[i % 3];
    out.push_back(w);
  }
  return out;
}

double spectral_radius(const Eigen::MatrixXd& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

Eigen::MatrixXd random_stable(std::size_t dim, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  const auto d = static_cast<Index>(dim);
  Eigen::MatrixXd a(d, d);
  for (Index r = 0; r < d; ++r)
    for (Index c = 0; c < d; ++c) a(r, c) = normal(rng);
  const double rho = spectral_radius(a);
  if (!(rho > 0.0)) throw Error("degenerate random dynamics matrix");
  return a * (radius / rho);
}

std::string sample_answer(const std::map<std::string, double>& dist, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (const auto& [answer, p] : dist) {
    acc += p;
    if (x < acc) return answer;
  }
  return std::prev(dist.end())->first;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Eigen::MatrixXd m(static_cast<Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (static_cast<Index>(rows[r].size()) != m.cols()) throw DataError("ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

// Boxes sit in horizontal lanes, one object per lane, and sway sideways.
BBox object_box(const SynthConfig& cfg, std::size_t object, std::int64_t frame, double phase) {
  const double lane = static_cast<double>(cfg.image_height) /
                      static_cast<double>(cfg.objects_per_video);
  const double h = 0.6 * lane;
  const double w = std::min(40.0, 0.1 * static_cast<double>(cfg.image_width));
  const double cy = (static_cast<double>(object) + 0.5) * lane;
  const double amp = 0.3 * static_cast<double>(cfg.image_width);
  const double cx = 0.5 * static_cast<double>(cfg.image_width) +
                    amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(frame) /
                                       static_cast<double>(std::max<std::int64_t>(cfg.frames_per_video, 200)) +
                                   phase);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace

SynthGroundTruth generate(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto d = static_cast<Index>(cfg.dim);

  SynthGroundTruth gt;
  gt.dynamics = random_stable(cfg.dim, cfg.spectral_radius, rng);
  for (int attempt = 0;; ++attempt) {
    gt.anomalous_dynamics = random_stable(cfg.dim, cfg.spectral_radius, rng);
    if ((gt.dynamics - gt.anomalous_dynamics).norm() >= 1.0) break;
    if (attempt == 100) throw ConfigError("could not draw anomalous dynamics with |M - M'| >= 1");
  }
  std::normal_distribution<double> unit(0.0, 1.0);
  gt.mean.resize(d);
  for (Index i = 0; i < d; ++i) gt.mean(i) = cfg.mean_scale * unit(rng);
  gt.windows = resolve_windows(cfg);
  const Eigen::VectorXd drive =
      (Eigen::MatrixXd::Identity(d, d) - gt.dynamics) * gt.mean;

  if (fs::exists(root) && !fs::is_empty(root)) {
    if (!fs::exists(root / kGroundTruthFile))
      throw ConfigError(root.string() + " is not empty and not a synthetic dataset");
    fs::remove_all(root / "train");
    fs::remove_all(root / "test");
  }
  fs::create_directories(root);
  PromptPool pool;
  for (const auto& p : cfg.prompts) pool.prompts.push_back({p.id, p.text});
  save_prompt_pool(pool, root / kPromptPoolFile);

  std::uniform_real_distribution<double> conf(0.7, 0.99);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);

  for (std::size_t v = 0; v < cfg.n_videos; ++v) {
    const bool is_train = v < cfg.n_train;
    const std::size_t test_index = is_train ? 0 : v - cfg.n_train;
    char name[32];
    std::snprintf(name, sizeof name, "%s_%03zu", is_train ? "train" : "test",
                  is_train ? v : test_index);

    VideoManifest video;
    video.video_id = name;
    video.frame_count = cfg.frames_per_video;
    video.image_width = cfg.image_width;
    video.image_height = cfg.image_height;
    video.features = FeatureStore(cfg.dim, {});

    std::vector<const AnomalyWindow*> windows;
    if (!is_train)
      for (const auto& w : gt.windows)
        if (w.test_video == test_index) windows.push_back(&w);
    auto in_window = [&](std::size_t object, std::int64_t frame, bool dynamics) {
      return std::any_of(windows.begin(), windows.end(), [&](const AnomalyWindow* w) {
        return w->object == object && frame >= w->start && frame < w->end &&
               (dynamics ? w->has_dynamics() : w->has_caption());
      });
    };

    // Simulate every object's feature trajectory
    //   f_{t+1} = M_t f_t + (I - M) mean + noise,
    // whose normal fixed point is `mean`.
    std::vector<Eigen::MatrixXd> traj_of(cfg.objects_per_video);
    std::vector<double> phases(cfg.objects_per_video);
    for (std::size_t o = 0; o < cfg.objects_per_video; ++o) {
      phases[o] = phase_dist(rng);
      auto step = [&](const Eigen::MatrixXd& m, const Eigen::VectorXd& f) {
        Eigen::VectorXd next = m * f + drive;
        for (Index i = 0; i < d; ++i) next(i) += cfg.noise_std * unit(rng);
        return next;
      };
      Eigen::VectorXd f = gt.mean;
      for (Index i = 0; i < d; ++i) f(i) += cfg.initial_state_std * unit(rng);
      for (std::int64_t b = 0; b < cfg.burn_in; ++b) f = step(gt.dynamics, f);
      Eigen::MatrixXd traj(cfg.frames_per_video, d);
      traj.row(0) = f.transpose();
      for (std::int64_t t = 1; t < cfg.frames_per_video; ++t) {
        const Eigen::MatrixXd& m =
            in_window(o, t, true) ? gt.anomalous_dynamics : gt.dynamics;
        traj.row(t) = step(m, traj.row(t - 1).transpose()).transpose();
      }
      traj_of[o] = std::move(traj);
    }

    std::vector<float> row(cfg.dim);
    for (std::int64_t t = 0; t < cfg.frames_per_video; ++t) {
      for (std::size_t o = 0; o < cfg.objects_per_video; ++o) {
        Detection det;
        det.frame = t;
        det.bbox = clamp_to_image(object_box(cfg, o, t, phases[o]),
                                  static_cast<double>(cfg.image_width),
                                  static_cast<double>(cfg.image_height));
        det.confidence = conf(rng);
        det.feature_ref = video.features.rows();
        const bool caption_anomaly = in_window(o, t, false);
        for (const auto& p : cfg.prompts)
          det.answers[p.id] = sample_answer(caption_anomaly ? p.anomalous : p.normal, rng);
        for (Index i = 0; i < d; ++i)
          row[static_cast<std::size_t>(i)] = static_cast<float>(traj_of[o](t, i));
        video.features.append(row);
        video.detections.push_back(std::move(det));
      }
    }

    if (!is_train) {
      std::vector<std::uint8_t> labels(static_cast<std::size_t>(cfg.frames_per_video), 0);
      for (const auto* w : windows)
        for (std::int64_t t = w->start; t < w->end; ++t) labels[static_cast<std::size_t>(t)] = 1;
      video.labels = std::move(labels);
      gt.test_ids.push_back(video.video_id);
    } else {
      gt.train_ids.push_back(video.video_id);
    }
    validate_manifest(video, &pool);
    save_manifest(video, root / (is_train ? "train" : "test") / video.video_id);
  }

  json windows = json::array();
  for (const auto& w : gt.windows)
    windows.push_back({{"test_video", w.test_video},
                       {"video_id", gt.test_ids.at(w.test_video)},
                       {"object", w.object},
                       {"start", w.start},
                       {"end", w.end},
                       {"type", to_string(w.type)}});
  json mean = json::array();
  for (Index i = 0; i < d; ++i) mean.push_back(gt.mean(i));
  const json j{{"seed", cfg.seed},
               {"noise_std", cfg.noise_std},
               {"dynamics", matrix_json(gt.dynamics)},
               {"anomalous_dynamics", matrix_json(gt.anomalous_dynamics)},
               {"mean", mean},
               {"windows", windows},
               {"train_ids", gt.train_ids},
               {"test_ids", gt.test_ids}};
  std::ofstream out(root / kGroundTruthFile, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write ground truth");
  out << j.dump(2) << "\n";
  return gt;
}

SynthGroundTruth load_ground_truth(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    const json j = json::parse(in);
    SynthGroundTruth gt;
    gt.dynamics = matrix_from_json(j.at("dynamics"));
    gt.anomalous_dynamics = matrix_from_json(j.at("anomalous_dynamics"));
    const auto mean = j.at("mean").get<std::vector<double>>();
    gt.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Index>(mean.size()));
    for (const auto& w : j.at("windows"))
      gt.windows.push_back({w.at("test_video").get<std::size_t>(), w.at("object").get<std::size_t>(),
                            w.at("start").get<std::int64_t>(), w.at("end").get<std::int64_t>(),
                            parse_anomaly_type(w.at("type").get<std::string>())});
    gt.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    gt.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    return gt;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed ground truth: " + e.what());
  }
}

}  // namespace ovad
