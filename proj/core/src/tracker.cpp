#include "ovad/tracker.hpp"

#include <algorithm>
#include <fstream>
#include <tuple>

#include "json.hpp"
#include "ovad/error.hpp"

namespace ovad {

using nlohmann::json;

void TrackerConfig::validate() const {
  if (!(conf_low >= 0.0 && conf_low <= conf_high && conf_high <= 1.0))
    throw ConfigError("tracker thresholds must satisfy 0 <= conf_low <= conf_high <= 1");
  if (!(iou_min > 0.0 && iou_min <= 1.0)) throw ConfigError("tracker iou_min must be in (0,1]");
}

namespace {

struct Candidate {
  double iou;
  std::size_t track;  // position in the live list
  std::int64_t track_id;
  std::size_t detection;
};

// Greedy one-to-one assignment. `track_taken` / `det_taken` are updated.
void greedy_match(const std::vector<Track>& tracks, const std::vector<std::size_t>& live,
                  std::vector<bool>& track_taken, const std::vector<std::size_t>& dets,
                  std::vector<bool>& det_taken, const VideoManifest& video, double iou_min,
                  std::vector<std::pair<std::size_t, std::size_t>>& matches) {
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < live.size(); ++t) {
    if (track_taken[t]) continue;
    const Track& tr = tracks[live[t]];
    const BBox& last = video.detections[tr.entries.back().detection].bbox;
    for (std::size_t d : dets) {
      if (det_taken[d]) continue;
      const double o = iou(last, video.detections[d].bbox);
      if (o >= iou_min) cands.push_back({o, t, tr.track_id, d});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.iou, a.track_id, a.detection) < std::tie(a.iou, b.track_id, b.detection);
  });
  for (const auto& c : cands) {
    if (track_taken[c.track] || det_taken[c.detection]) continue;
    track_taken[c.track] = true;
    det_taken[c.detection] = true;
    matches.emplace_back(c.track, c.detection);
  }
}

}  // namespace

std::vector<Track> build_tracks(const VideoManifest& video, const TrackerConfig& cfg) {
  cfg.validate();
  std::vector<Track> tracks;
  std::vector<std::size_t> live;  // indices into `tracks`, extended last frame
  std::vector<bool> det_taken(video.detections.size(), false);

  std::size_t i = 0;
  const auto& dets = video.detections;
  while (i < dets.size()) {
    const std::int64_t frame = dets[i].frame;
    std::size_t j = i;
    while (j < dets.size() && dets[j].frame == frame) ++j;

    // Tracks that did not see the previous frame have already ended.
    std::erase_if(live, [&](std::size_t t) { return tracks[t].end_frame() != frame - 1; });

    std::vector<std::size_t> high, low;
    for (std::size_t d = i; d < j; ++d) {
      if (dets[d].confidence >= cfg.conf_high) {
        high.push_back(d);
      } else if (dets[d].confidence >= cfg.conf_low) {
        low.push_back(d);
      }
    }

    std::vector<bool> track_taken(live.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> matches;
    greedy_match(tracks, live, track_taken, high, det_taken, video, cfg.iou_min, matches);
    greedy_match(tracks, live, track_taken, low, det_taken, video, cfg.iou_min, matches);

    std::vector<std::size_t> next_live;
    std::sort(matches.begin(), matches.end());
    for (const auto& [t, d] : matches) {
      tracks[live[t]].entries.push_back({frame, d});
      next_live.push_back(live[t]);
    }
    for (std::size_t d : high) {
      if (det_taken[d]) continue;
      det_taken[d] = true;
      Track tr;
      tr.track_id = static_cast<std::int64_t>(tracks.size());
      tr.entries.push_back({frame, d});
      next_live.push_back(tracks.size());
      tracks.push_back(std::move(tr));
    }
    live = std::move(next_live);
    i = j;
  }
  return tracks;
}

std::size_t clip_count(std::size_t track_length, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0 || track_length < length) return 0;
  return (track_length - length) / stride + 1;
}

std::vector<Clip> segment_clips(const Track& track, const VideoManifest& video,
                                std::size_t length, std::size_t stride) {
  if (length < 2) throw ConfigError("clip length must be at least 2");
  if (stride < 1) throw ConfigError("clip stride must be at least 1");
  std::vector<Clip> clips;
  const std::size_t n = clip_count(track.length(), length, stride);
  const std::size_t dim = video.features.dim();
  clips.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t s = c * stride;
    Clip clip;
    clip.track_id = track.track_id;
    clip.start_frame = track.entries[s].frame;
    clip.features.resize(static_cast<Eigen::Index>(length), static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < length; ++k) {
      const std::size_t det = track.entries[s + k].detection;
      clip.detections.push_back(det);
      const auto row = video.features.row(video.detections[det].feature_ref);
      for (std::size_t q = 0; q < dim; ++q)
        clip.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(q)) = row[q];
      clip.answers.push_back(video.detections[det].answers);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

void save_tracks(const std::vector<Track>& tracks, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto& t : tracks) {
    json frames = json::array();
    json detections = json::array();
    for (const auto& e : t.entries) {
      frames.push_back(e.frame);
      detections.push_back(e.detection);
    }
    out << json{{"track_id", t.track_id}, {"frames", frames}, {"detections", detections}}.dump()
        << "\n";
  }
}

std::vector<Track> load_tracks(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::vector<Track> tracks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = file.string() + ":" + std::to_string(line_no);
    try {
      const json j = json::parse(line);
      Track t;
      t.track_id = j.at("track_id").get<std::int64_t>();
      const auto frames = j.at("frames").get<std::vector<std::int64_t>>();
      const auto detections = j.at("detections").get<std::vector<std::size_t>>();
      if (frames.empty() || frames.size() != detections.size())
        throw DataError(where + ": frames and detections must be non-empty and equal length");
      for (std::size_t k = 0; k < frames.size(); ++k) {
        if (k > 0 && frames[k] != frames[k - 1] + 1)
          throw DataError(where + ": track frames are not consecutive");
        t.entries.push_back({frames[k], detections[k]});
      }
      tracks.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed record: " + e.what());
    }
  }
  return tracks;
}

}  // namespace ovad
