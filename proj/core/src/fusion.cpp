#include "ovad/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ovad/error.hpp"

namespace ovad {

double frame_max_pool(std::span<const double> object_scores) {
  if (object_scores.empty()) return 0.0;
  return *std::max_element(object_scores.begin(), object_scores.end());
}

ScoreSeries pool_frames(std::string video_id, std::int64_t frame_count,
                        std::span<const std::pair<std::int64_t, double>> observations,
                        ScoreKind kind) {
  if (frame_count < 0) throw ConfigError("frame_count must be >= 0");
  std::vector<std::vector<double>> per_frame(static_cast<std::size_t>(frame_count));
  for (const auto& [frame, score] : observations) {
    if (frame < 0 || frame >= frame_count)
      throw DataError(video_id + ": score for frame " + std::to_string(frame) + " out of range");
    per_frame[static_cast<std::size_t>(frame)].push_back(score);
  }
  ScoreSeries out{std::move(video_id), {}, kind};
  out.values.reserve(per_frame.size());
  for (const auto& scores : per_frame) out.values.push_back(frame_max_pool(scores));
  return out;
}

ScoreSeries minmax_normalize(ScoreSeries series) {
  if (series.values.empty()) return series;
  const auto [lo, hi] = std::minmax_element(series.values.begin(), series.values.end());
  const double min = *lo;
  const double range = *hi - min;
  for (auto& v : series.values) v = range > 0.0 ? (v - min) / range : 0.0;
  return series;
}

ScoreSeries fuse(const ScoreSeries& s, const ScoreSeries& t, double lambda) {
  if (s.size() != t.size())
    throw DataError(s.video_id + ": static and temporal series lengths differ (" +
                    std::to_string(s.size()) + " vs " + std::to_string(t.size()) + ")");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("fusion lambda must be in [0,1]");
  ScoreSeries out{s.video_id, std::vector<double>(s.size()), ScoreKind::fused};
  for (std::size_t i = 0; i < s.size(); ++i)
    out.values[i] = lambda * s.values[i] + (1.0 - lambda) * t.values[i];
  return out;
}

std::vector<double> gaussian_taps(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be > 0");
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    const double x = static_cast<double>(i);
    taps[static_cast<std::size_t>(i + r)] = std::exp(-x * x / (2.0 * sigma * sigma));
  }
  return taps;
}

ScoreSeries gaussian_smooth(ScoreSeries series, double sigma) {
  const std::vector<double> taps = gaussian_taps(sigma);
  const auto r = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const auto n = static_cast<std::ptrdiff_t>(series.values.size());
  std::vector<double> out(series.values.size());
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-r, -i);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(r, n - 1 - i);
    double acc = 0.0, norm = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double w = taps[static_cast<std::size_t>(k + r)];
      acc += w * series.values[static_cast<std::size_t>(i + k)];
      norm += w;
    }
    out[static_cast<std::size_t>(i)] = acc / norm;
  }
  series.values = std::move(out);
  series.kind = ScoreKind::final;
  return series;
}

void FusionConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("fusion lambda must be in [0,1]");
  if (!(sigma > 0.0)) throw ConfigError("smoothing sigma must be > 0");
}

VideoScores combine_scores(const ScoreSeries& raw_static, const ScoreSeries& raw_temporal,
                           const FusionConfig& cfg) {
  cfg.validate();
  VideoScores out;
  out.video_id = raw_static.video_id;
  out.static_scores = minmax_normalize(raw_static);
  out.static_scores.kind = ScoreKind::static_caption;
  out.temporal_scores = minmax_normalize(raw_temporal);
  out.temporal_scores.kind = ScoreKind::temporal;
  out.fused = fuse(out.static_scores, out.temporal_scores, cfg.lambda);
  out.final_scores = gaussian_smooth(out.fused, cfg.sigma);
  // Rounding can push a convex combination a hair outside [0,1].
  for (auto& v : out.final_scores.values) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void write_scores_csv(const VideoScores& s, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << "frame,static,temporal,fused,final\n";
  char buf[160];
  for (std::size_t i = 0; i < s.final_scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i,
                  s.static_scores.values[i], s.temporal_scores.values[i], s.fused.values[i],
                  s.final_scores.values[i]);
    out << buf;
  }
}

VideoScores read_scores_csv(const std::filesystem::path& file, std::string video_id) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  if (line != "frame,static,temporal,fused,final")
    throw DataError(file.string() + ": unexpected header");
  VideoScores s;
  s.video_id = video_id;
  s.static_scores = {video_id, {}, ScoreKind::static_caption};
  s.temporal_scores = {video_id, {}, ScoreKind::temporal};
  s.fused = {video_id, {}, ScoreKind::fused};
  s.final_scores = {video_id, {}, ScoreKind::final};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t frame = 0;
    double a = 0, b = 0, c = 0, d = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf", &frame, &a, &b, &c, &d) != 5 ||
        frame != s.final_scores.size())
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": malformed row");
    s.static_scores.values.push_back(a);
    s.temporal_scores.values.push_back(b);
    s.fused.values.push_back(c);
    s.final_scores.values.push_back(d);
  }
  return s;
}

}  // namespace ovad
