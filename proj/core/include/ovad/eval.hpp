#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ovad {

struct LabeledScores {
  std::string video_id;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;  ///< 1 = anomalous
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// ROC traced over every distinct score, highest threshold first. Starts at
/// (0,0) with threshold +inf and ends at (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels);

/// Trapezoidal area under the ROC; equal to P(s+ > s-) + P(s+ = s-)/2.
/// Throws DataError unless both classes are present.
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// AUC after concatenating all videos.
double micro_auc(std::span<const LabeledScores> videos);

/// Mean of per-video AUCs over videos containing both classes.
/// Returns NaN when no video qualifies.
double macro_auc(std::span<const LabeledScores> videos);

/// Non-interpolated AP: mean precision at each positive's rank, ranking by
/// descending score with ties kept in input order. Throws DataError without
/// positives.
double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct VideoMetrics {
  std::string video_id;
  std::size_t frames = 0;
  std::size_t positives = 0;
  double auc = 0.0;  ///< NaN when the video has a single class
  double ap = 0.0;   ///< NaN when the video has no positives
};

struct EvalReport {
  double micro_auc = 0.0;
  double macro_auc = 0.0;
  double ap = 0.0;
  std::size_t frames = 0;
  std::size_t positives = 0;
  std::vector<VideoMetrics> videos;
  std::vector<RocPoint> roc;
};

EvalReport evaluate(std::span<const LabeledScores> videos);

/// JSON summary (NaN written as null).
void write_report_json(const EvalReport& report, const std::filesystem::path& file);
/// threshold,fpr,tpr
void write_roc_csv(const EvalReport& report, const std::filesystem::path& file);

}  // namespace ovad
