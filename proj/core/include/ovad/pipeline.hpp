#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ovad/dataset.hpp"
#include "ovad/eval.hpp"
#include "ovad/fusion.hpp"
#include "ovad/s3m.hpp"
#include "ovad/spa.hpp"
#include "ovad/tracker.hpp"

namespace ovad {

/// Labeled sub-seed: every random stream in the pipeline is derived from the
/// single top-level seed through this function.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Every tunable of the end-to-end pipeline. Settable by dotted key, e.g.
/// `s3m.epochs` or `fusion.lambda`.
struct PipelineConfig {
  std::filesystem::path data;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  std::size_t threads = 0;  ///< 0 = hardware concurrency

  TrackerConfig tracker;
  std::size_t clip_length = 8;
  std::size_t clip_stride = 1;
  SpaConfig spa;
  std::size_t state_dim = 64;
  TrainConfig train;                ///< seed is derived, not read
  std::optional<double> hippo_dt;   ///< defaults to 1 / clip_length
  FusionConfig fusion;

  /// Sets one key from its string form. Throws ConfigError on unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);

  /// Every key with its current value, in a form `set` accepts.
  std::map<std::string, std::string> to_map() const;

  /// Train config with derived seed and hippo step filled in.
  TrainConfig effective_train() const;

  void validate() const;
};

/// Reads `key = value` lines ('#' comments) or a flat JSON object.
std::map<std::string, std::string> read_config_file(const std::filesystem::path& file);
void write_effective_config(const PipelineConfig& cfg, const std::filesystem::path& file);

// Stage building blocks ----------------------------------------------------

std::vector<std::vector<Track>> track_videos(const std::vector<VideoManifest>& videos,
                                             const TrackerConfig& cfg);

/// Clip feature sequences of all tracks, in video/track/window order.
std::vector<FeatureSequence> collect_clips(const std::vector<VideoManifest>& videos,
                                           const std::vector<std::vector<Track>>& tracks,
                                           std::size_t length, std::size_t stride);

/// Per-frame max of static object scores over all detections.
ScoreSeries static_series(const VideoManifest& video, const SpaModel& spa);

/// Per-frame max of temporal scores; each clip scores its frames 2..L and
/// overlapping clips / objects are max-pooled.
ScoreSeries temporal_series(const VideoManifest& video, const std::vector<Track>& tracks,
                            const S3MParams& params, std::size_t length, std::size_t stride);

VideoScores score_video(const VideoManifest& video, const std::vector<Track>& tracks,
                        const SpaModel& spa, const S3MParams& params,
                        const PipelineConfig& cfg);

/// Scores many videos, in parallel across videos; output order follows input.
std::vector<VideoScores> score_videos(const std::vector<VideoManifest>& videos,
                                      const std::vector<std::vector<Track>>& tracks,
                                      const SpaModel& spa, const S3MParams& params,
                                      const PipelineConfig& cfg);

/// Pairs each video's final scores with its labels. Throws DataError
/// ("labels required") when a video has none.
std::vector<LabeledScores> labeled_final_scores(const std::vector<VideoManifest>& videos,
                                                const std::vector<VideoScores>& scores);

// File-level stages: each reads its inputs from cfg.data and the checkpoints
// of earlier stages under cfg.out, and writes to cfg.out/<stage>/.

void run_track_stage(const PipelineConfig& cfg);
SpaModel run_spa_stage(const PipelineConfig& cfg);
TrainResult run_s3m_stage(const PipelineConfig& cfg);
std::vector<VideoScores> run_score_stage(const PipelineConfig& cfg);
EvalReport run_eval_stage(const PipelineConfig& cfg);

/// All stages in order; writes effective_config.json first.
EvalReport run_pipeline(const PipelineConfig& cfg);

/// Checks tracks loaded from disk against their video.
void validate_tracks(const std::vector<Track>& tracks, const VideoManifest& video);

}  // namespace ovad
