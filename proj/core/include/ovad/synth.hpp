#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ovad {

enum class AnomalyType { dynamics, caption, both };

std::string to_string(AnomalyType t);
AnomalyType parse_anomaly_type(const std::string& s);

/// Frames [start, end) of one object in one test video.
struct AnomalyWindow {
  std::size_t test_video = 0;
  std::size_t object = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  AnomalyType type = AnomalyType::both;

  bool has_dynamics() const { return type != AnomalyType::caption; }
  bool has_caption() const { return type != AnomalyType::dynamics; }
};

/// Answer distribution of one prompt, in normal and anomalous conditions.
struct SynthPrompt {
  std::string id;
  std::string text;
  std::map<std::string, double> normal;
  std::map<std::string, double> anomalous;
};

/// Total variation distance between two answer distributions.
double total_variation(const std::map<std::string, double>& p,
                       const std::map<std::string, double>& q);

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_videos = 12;
  std::size_t n_train = 8;
  std::int64_t frames_per_video = 200;
  std::size_t objects_per_video = 3;
  std::size_t dim = 16;
  double noise_std = 0.05;         ///< std of the per-step feature innovation
  double spectral_radius = 0.8;    ///< of both the normal and anomalous dynamics
  double mean_scale = 1.0;         ///< std of the shared feature mean
  double initial_state_std = 0.1;  ///< initial deviation from the mean
  std::int64_t burn_in = 20;
  std::int64_t image_width = 640;
  std::int64_t image_height = 480;

  /// Used as-is when non-empty; otherwise `n_windows` windows of
  /// `window_length` frames are placed one per test video (cycling), with
  /// types cycling caption, dynamics, both.
  std::vector<AnomalyWindow> windows;
  std::size_t n_windows = 4;
  std::int64_t window_length = 30;

  std::vector<SynthPrompt> prompts = default_prompts();

  static std::vector<SynthPrompt> default_prompts();

  std::size_t n_test() const { return n_videos - n_train; }
  void validate() const;
};

struct SynthGroundTruth {
  Eigen::MatrixXd dynamics;            ///< normal transition M
  Eigen::MatrixXd anomalous_dynamics;  ///< M' used inside dynamics windows
  Eigen::VectorXd mean;                ///< fixed point of the normal dynamics
  std::vector<AnomalyWindow> windows;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

/// Spectral radius of a square matrix.
double spectral_radius(const Eigen::MatrixXd& m);

/// Concrete windows for a config (explicit ones, or the generated defaults).
std::vector<AnomalyWindow> resolve_windows(const SynthConfig& cfg);

/// Writes a dataset root with prompt_pool.json, train/, test/ and
/// ground_truth.json. Features follow the stable affine system
/// f_{t+1} = M f_t + (I - M) mean + noise; inside a dynamics window the
/// affected object's transitions into window frames use M' in place of M.
/// Deterministic in cfg.
SynthGroundTruth generate(const SynthConfig& cfg, const std::filesystem::path& root);

inline constexpr const char* kGroundTruthFile = "ground_truth.json";

SynthGroundTruth load_ground_truth(const std::filesystem::path& file);

}  // namespace ovad
