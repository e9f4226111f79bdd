#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ovad/geometry.hpp"

namespace ovad {

/// One object observation in one frame.
struct Detection {
  std::int64_t frame = 0;
  BBox bbox;
  double confidence = 0.0;
  std::size_t feature_ref = 0;
  /// prompt_id -> answer token
  std::map<std::string, std::string> answers;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Row-major store of per-detection semantic feature vectors.
class FeatureStore {
 public:
  FeatureStore() = default;
  FeatureStore(std::size_t dim, std::vector<float> values);

  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : values_.size() / dim_; }
  std::span<const float> row(std::size_t i) const;
  std::span<const float> values() const { return values_; }

  void append(std::span<const float> row);

  friend bool operator==(const FeatureStore&, const FeatureStore&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

/// Everything known about one video: geometry, detections, features and
/// (for test videos) per-frame labels.
struct VideoManifest {
  std::string video_id;
  std::int64_t frame_count = 0;
  std::int64_t image_width = 0;
  std::int64_t image_height = 0;
  std::vector<Detection> detections;
  FeatureStore features;
  std::optional<std::vector<std::uint8_t>> labels;

  friend bool operator==(const VideoManifest&, const VideoManifest&) = default;
};

struct Prompt {
  std::string id;
  std::string text;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct PromptPool {
  std::vector<Prompt> prompts;

  bool contains(const std::string& id) const;
  friend bool operator==(const PromptPool&, const PromptPool&) = default;
};

/// A dataset root: `prompt_pool.json`, `train/<video>/`, `test/<video>/`.
struct Dataset {
  PromptPool pool;
  std::vector<VideoManifest> train;
  std::vector<VideoManifest> test;

  /// Feature dimension shared by every video; 0 when there are no features.
  std::size_t feature_dim() const;
};

// File names inside a video directory.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kDetectionsFile = "detections.jsonl";
inline constexpr const char* kFeaturesFile = "features.bin";
inline constexpr const char* kFeaturesIndexFile = "features.idx.json";
inline constexpr const char* kLabelsFile = "labels.json";
inline constexpr const char* kPromptPoolFile = "prompt_pool.json";

/// Loads and validates one video directory. When `pool` is given, every
/// answer's prompt_id must be in it. Throws DataError.
VideoManifest load_manifest(const std::filesystem::path& dir,
                            const PromptPool* pool = nullptr);

/// Writes one video directory. Output is a deterministic function of the
/// manifest, so load -> save reproduces the input bytes.
void save_manifest(const VideoManifest& video, const std::filesystem::path& dir);

/// Checks every invariant load_manifest enforces. Throws DataError.
void validate_manifest(const VideoManifest& video, const PromptPool* pool = nullptr);

PromptPool load_prompt_pool(const std::filesystem::path& file);
void save_prompt_pool(const PromptPool& pool, const std::filesystem::path& file);

/// Loads a dataset root. Videos within a split are ordered by directory name.
/// Feature dimensions must agree across all videos.
Dataset load_dataset(const std::filesystem::path& root);

}  // namespace ovad
