#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ovad/dataset.hpp"

namespace ovad {

/// Row-per-frame feature matrix consumed by the temporal model.
using FeatureSequence = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TrackerConfig {
  double conf_high = 0.6;
  double conf_low = 0.1;
  double iou_min = 0.3;

  void validate() const;
};

struct TrackEntry {
  std::int64_t frame = 0;
  std::size_t detection = 0;  ///< index into VideoManifest::detections

  friend bool operator==(const TrackEntry&, const TrackEntry&) = default;
};

/// A frame-contiguous trajectory of one object.
struct Track {
  std::int64_t track_id = 0;
  std::vector<TrackEntry> entries;

  std::int64_t begin_frame() const { return entries.front().frame; }
  std::int64_t end_frame() const { return entries.back().frame; }
  std::size_t length() const { return entries.size(); }

  friend bool operator==(const Track&, const Track&) = default;
};

/// Fixed-length window over a track.
struct Clip {
  std::int64_t track_id = 0;
  std::int64_t start_frame = 0;
  std::vector<std::size_t> detections;
  FeatureSequence features;
  std::vector<std::map<std::string, std::string>> answers;

  std::size_t length() const { return detections.size(); }
};

/// ByteTrack-style two-stage IoU association without motion prediction.
/// Stage 1 matches live tracks to detections with confidence >= conf_high,
/// stage 2 matches the leftovers to detections in [conf_low, conf_high).
/// Matching is greedy by descending IoU, ties by (track_id, detection index).
/// Unmatched high-confidence detections open new tracks; unmatched tracks end.
std::vector<Track> build_tracks(const VideoManifest& video, const TrackerConfig& cfg = {});

/// Sliding windows [s, s+length) for s = 0, stride, ... fully inside the track.
std::vector<Clip> segment_clips(const Track& track, const VideoManifest& video,
                                std::size_t length, std::size_t stride);

/// Number of windows segment_clips produces for a track of `track_length`.
std::size_t clip_count(std::size_t track_length, std::size_t length, std::size_t stride);

inline constexpr const char* kTracksFile = "tracks.jsonl";

void save_tracks(const std::vector<Track>& tracks, const std::filesystem::path& file);
std::vector<Track> load_tracks(const std::filesystem::path& file);

}  // namespace ovad
