#include "ovad/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ovad/error.hpp"

namespace ovad {

namespace fs = std::filesystem;
using nlohmann::json;

FeatureStore::FeatureStore(std::size_t dim, std::vector<float> values)
    : dim_(dim), values_(std::move(values)) {
  if (dim_ == 0 && !values_.empty()) throw DataError("feature store with dim 0 has values");
  if (dim_ != 0 && values_.size() % dim_ != 0)
    throw DataError("feature store size is not a multiple of dim");
}

std::span<const float> FeatureStore::row(std::size_t i) const {
  return std::span<const float>(values_).subspan(i * dim_, dim_);
}

void FeatureStore::append(std::span<const float> r) {
  if (r.size() != dim_) throw DataError("feature row has wrong dimension");
  values_.insert(values_.end(), r.begin(), r.end());
}

bool PromptPool::contains(const std::string& id) const {
  return std::any_of(prompts.begin(), prompts.end(),
                     [&](const Prompt& p) { return p.id == id; });
}

std::size_t Dataset::feature_dim() const {
  for (const auto* split : {&train, &test})
    for (const auto& v : *split)
      if (v.features.dim() != 0) return v.features.dim();
  return 0;
}

namespace {

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << text;
}

json parse_json_file(const fs::path& file) {
  try {
    return json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed JSON: " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key))
    throw DataError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

Detection parse_detection(const json& j, const std::string& where) {
  Detection d;
  d.frame = require<std::int64_t>(j, "frame", where);
  const auto box = require<std::vector<double>>(j, "bbox", where);
  if (box.size() != 4) throw DataError(where + ": bbox must have 4 coordinates");
  d.bbox = {box[0], box[1], box[2], box[3]};
  d.confidence = require<double>(j, "confidence", where);
  const auto ref = require<std::int64_t>(j, "feature_ref", where);
  if (ref < 0) throw DataError(where + ": feature_ref out of range");
  d.feature_ref = static_cast<std::size_t>(ref);
  if (j.contains("answers"))
    d.answers = require<std::map<std::string, std::string>>(j, "answers", where);
  return d;
}

json detection_json(const Detection& d) {
  return json{{"frame", d.frame},
              {"bbox", {d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2}},
              {"confidence", d.confidence},
              {"feature_ref", d.feature_ref},
              {"answers", d.answers}};
}

std::vector<float> read_features(const fs::path& file, std::size_t count) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open " + file.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != count * sizeof(float))
    throw DataError(file.string() + ": dimension mismatch: expected " +
                    std::to_string(count * sizeof(float)) + " bytes, found " +
                    std::to_string(bytes));
  in.seekg(0);
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : values) {
      auto u = std::bit_cast<std::uint32_t>(v);
      u = __builtin_bswap32(u);
      v = std::bit_cast<float>(u);
    }
  }
  return values;
}

void write_features(const fs::path& file, std::span<const float> values) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      const auto u = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&u), sizeof u);
    }
  }
}

}  // namespace

void validate_manifest(const VideoManifest& v, const PromptPool* pool) {
  const std::string where = v.video_id.empty() ? std::string("video") : v.video_id;
  if (v.frame_count <= 0) throw DataError(where + ": frame_count must be positive");
  if (v.image_width <= 0 || v.image_height <= 0)
    throw DataError(where + ": image size must be positive");

  for (float x : v.features.values())
    if (!std::isfinite(x)) throw DataError(where + ": non-finite feature value");

  std::int64_t prev_frame = 0;
  for (std::size_t i = 0; i < v.detections.size(); ++i) {
    const Detection& d = v.detections[i];
    const std::string at = where + ": detection " + std::to_string(i);
    if (d.frame < 0 || d.frame >= v.frame_count) throw DataError(at + ": frame out of range");
    if (d.frame < prev_frame) throw DataError(at + ": detections not sorted by frame");
    prev_frame = d.frame;
    if (!d.bbox.valid()) throw DataError(at + ": invalid bbox");
    if (d.bbox.x1 < 0 || d.bbox.y1 < 0 || d.bbox.x2 > static_cast<double>(v.image_width) ||
        d.bbox.y2 > static_cast<double>(v.image_height))
      throw DataError(at + ": bbox outside image");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
      throw DataError(at + ": confidence outside [0,1]");
    if (d.feature_ref >= v.features.rows()) throw DataError(at + ": feature_ref out of range");
    if (pool) {
      for (const auto& [prompt_id, answer] : d.answers)
        if (!pool->contains(prompt_id))
          throw DataError(at + ": unknown prompt_id '" + prompt_id + "'");
    }
  }

  if (v.labels) {
    if (static_cast<std::int64_t>(v.labels->size()) != v.frame_count)
      throw DataError(where + ": labels length differs from frame_count");
    for (auto l : *v.labels)
      if (l > 1) throw DataError(where + ": labels must be 0 or 1");
  }
}

VideoManifest load_manifest(const fs::path& dir, const PromptPool* pool) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": not a directory");

  VideoManifest v;
  const fs::path manifest_path = dir / kManifestFile;
  const json m = parse_json_file(manifest_path);
  const std::string mwhere = manifest_path.string();
  v.video_id = require<std::string>(m, "video_id", mwhere);
  v.frame_count = require<std::int64_t>(m, "frame_count", mwhere);
  v.image_width = require<std::int64_t>(m, "image_width", mwhere);
  v.image_height = require<std::int64_t>(m, "image_height", mwhere);
  const auto expected_detections = require<std::int64_t>(m, "detection_count", mwhere);

  const fs::path idx_path = dir / kFeaturesIndexFile;
  const json idx = parse_json_file(idx_path);
  const auto dim = require<std::int64_t>(idx, "dim", idx_path.string());
  const auto rows = require<std::int64_t>(idx, "rows", idx_path.string());
  if (dim <= 0 || rows < 0) throw DataError(idx_path.string() + ": invalid dim/rows");
  v.features = FeatureStore(
      static_cast<std::size_t>(dim),
      read_features(dir / kFeaturesFile, static_cast<std::size_t>(dim * rows)));

  const fs::path det_path = dir / kDetectionsFile;
  std::ifstream det_in(det_path);
  if (!det_in) throw DataError("cannot open " + det_path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(det_in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = det_path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
    Detection d = parse_detection(j, where);
    d.bbox = clamp_to_image(d.bbox, static_cast<double>(v.image_width),
                            static_cast<double>(v.image_height));
    if (d.feature_ref >= static_cast<std::size_t>(rows))
      throw DataError(where + ": feature_ref out of range");
    v.detections.push_back(std::move(d));
  }
  if (static_cast<std::int64_t>(v.detections.size()) != expected_detections)
    throw DataError(mwhere + ": detection_count " + std::to_string(expected_detections) +
                    " but " + std::to_string(v.detections.size()) + " records found");

  const fs::path labels_path = dir / kLabelsFile;
  if (fs::exists(labels_path)) {
    const json l = parse_json_file(labels_path);
    try {
      v.labels = l.get<std::vector<std::uint8_t>>();
    } catch (const json::exception&) {
      throw DataError(labels_path.string() + ": labels must be an array of 0/1");
    }
  }

  validate_manifest(v, pool);
  return v;
}

void save_manifest(const VideoManifest& v, const fs::path& dir) {
  fs::create_directories(dir);
  const json m{{"video_id", v.video_id},
               {"frame_count", v.frame_count},
               {"image_width", v.image_width},
               {"image_height", v.image_height},
               {"detection_count", v.detections.size()}};
  write_text(dir / kManifestFile, m.dump(2) + "\n");

  std::string lines;
  for (const auto& d : v.detections) lines += detection_json(d).dump() + "\n";
  write_text(dir / kDetectionsFile, lines);

  write_features(dir / kFeaturesFile, v.features.values());
  const json idx{{"dim", v.features.dim()}, {"rows", v.features.rows()}};
  write_text(dir / kFeaturesIndexFile, idx.dump(2) + "\n");

  if (v.labels) {
    write_text(dir / kLabelsFile, json(*v.labels).dump() + "\n");
  } else {
    fs::remove(dir / kLabelsFile);
  }
}

PromptPool load_prompt_pool(const fs::path& file) {
  const json j = parse_json_file(file);
  PromptPool pool;
  const auto arr = require<json>(j, "prompts", file.string());
  if (!arr.is_array()) throw DataError(file.string() + ": 'prompts' must be an array");
  for (const auto& p : arr) {
    Prompt prompt{require<std::string>(p, "id", file.string()),
                  require<std::string>(p, "text", file.string())};
    if (pool.contains(prompt.id))
      throw DataError(file.string() + ": duplicate prompt_id '" + prompt.id + "'");
    pool.prompts.push_back(std::move(prompt));
  }
  if (pool.prompts.empty()) throw DataError(file.string() + ": prompt pool is empty");
  return pool;
}

void save_prompt_pool(const PromptPool& pool, const fs::path& file) {
  json arr = json::array();
  for (const auto& p : pool.prompts) arr.push_back({{"id", p.id}, {"text", p.text}});
  write_text(file, json{{"prompts", arr}}.dump(2) + "\n");
}

namespace {

std::vector<VideoManifest> load_split(const fs::path& dir, const PromptPool& pool) {
  std::vector<VideoManifest> out;
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) out.push_back(load_manifest(d, &pool));
  return out;
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError(root.string() + ": dataset root not found");
  Dataset ds;
  ds.pool = load_prompt_pool(root / kPromptPoolFile);
  ds.train = load_split(root / "train", ds.pool);
  ds.test = load_split(root / "test", ds.pool);
  if (ds.train.empty() && ds.test.empty())
    throw DataError(root.string() + ": no videos under train/ or test/");

  const std::size_t dim = ds.feature_dim();
  for (const auto* split : {&ds.train, &ds.test})
    for (const auto& v : *split)
      if (v.features.dim() != dim)
        throw DataError(v.video_id + ": dimension mismatch: feature dim " +
                        std::to_string(v.features.dim()) + " vs dataset dim " +
                        std::to_string(dim));
  return ds;
}

}  // namespace ovad
