#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ovad {

enum class ScoreKind { static_caption, temporal, fused, final };

struct ScoreSeries {
  std::string video_id;
  std::vector<double> values;
  ScoreKind kind = ScoreKind::fused;

  std::size_t size() const { return values.size(); }
};

/// Highest object score in a frame; 0 when the frame has no objects.
double frame_max_pool(std::span<const double> object_scores);

/// Object-level (frame, score) observations pooled into a per-frame series
/// with frame_max_pool. Observations outside [0, frame_count) are rejected.
ScoreSeries pool_frames(std::string video_id, std::int64_t frame_count,
                        std::span<const std::pair<std::int64_t, double>> observations,
                        ScoreKind kind);

/// (v - min) / (max - min); a constant series maps to zeros.
ScoreSeries minmax_normalize(ScoreSeries series);

/// lambda * static + (1 - lambda) * temporal, elementwise.
ScoreSeries fuse(const ScoreSeries& static_scores, const ScoreSeries& temporal_scores,
                 double lambda);

/// Unnormalized taps exp(-i^2 / (2 sigma^2)) for i = -r..r, r = ceil(3 sigma).
std::vector<double> gaussian_taps(double sigma);

/// Truncated Gaussian convolution; at each position the taps are
/// renormalized over the in-bounds part of the window.
ScoreSeries gaussian_smooth(ScoreSeries series, double sigma);

struct FusionConfig {
  double lambda = 0.5;
  double sigma = 2.0;

  void validate() const;
};

/// The four per-frame series written to scores.csv.
struct VideoScores {
  std::string video_id;
  ScoreSeries static_scores;    ///< normalized A_s
  ScoreSeries temporal_scores;  ///< normalized A_t
  ScoreSeries fused;
  ScoreSeries final_scores;
};

/// Normalizes raw static and temporal series, fuses and smooths them.
VideoScores combine_scores(const ScoreSeries& raw_static, const ScoreSeries& raw_temporal,
                           const FusionConfig& cfg);

inline constexpr const char* kScoresFile = "scores.csv";

/// Columns: frame,static,temporal,fused,final.
void write_scores_csv(const VideoScores& scores, const std::filesystem::path& file);
VideoScores read_scores_csv(const std::filesystem::path& file, std::string video_id);

}  // namespace ovad
