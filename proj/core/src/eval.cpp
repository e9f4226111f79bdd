#include "ovad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "ovad/error.hpp"

namespace ovad {

namespace {

void check_lengths(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size())
    throw DataError("scores and labels differ in length (" + std::to_string(scores.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("NaN score");
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const auto pos = static_cast<double>(std::count_if(labels.begin(), labels.end(),
                                                     [](std::uint8_t l) { return l != 0; }));
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0.0 || neg == 0.0) throw DataError("ROC needs both positive and negative frames");

  const auto idx = descending_order(scores);
  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (labels[idx[k]] != 0) {
      tp += 1.0;
    } else {
      fp += 1.0;
    }
    // Emit a point only once all frames sharing this score are counted.
    if (k + 1 == idx.size() || scores[idx[k + 1]] != scores[idx[k]])
      roc.push_back({scores[idx[k]], fp / neg, tp / pos});
  }
  return roc;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto roc = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k)
    area += (roc[k].fpr - roc[k - 1].fpr) * 0.5 * (roc[k].tpr + roc[k - 1].tpr);
  return area;
}

namespace {

LabeledScores concatenate(std::span<const LabeledScores> videos) {
  LabeledScores all;
  for (const auto& v : videos) {
    check_lengths(v.scores, v.labels);
    all.scores.insert(all.scores.end(), v.scores.begin(), v.scores.end());
    all.labels.insert(all.labels.end(), v.labels.begin(), v.labels.end());
  }
  return all;
}

bool has_both_classes(std::span<const std::uint8_t> labels) {
  const bool any_pos = std::any_of(labels.begin(), labels.end(), [](auto l) { return l != 0; });
  const bool any_neg = std::any_of(labels.begin(), labels.end(), [](auto l) { return l == 0; });
  return any_pos && any_neg;
}

}  // namespace

double micro_auc(std::span<const LabeledScores> videos) {
  const LabeledScores all = concatenate(videos);
  return auc(all.scores, all.labels);
}

double macro_auc(std::span<const LabeledScores> videos) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : videos) {
    check_lengths(v.scores, v.labels);
    if (!has_both_classes(v.labels)) continue;
    sum += auc(v.scores, v.labels);
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

double average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  check_lengths(scores, labels);
  const auto idx = descending_order(scores);
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (labels[idx[k]] == 0) continue;
    hits += 1.0;
    sum += hits / static_cast<double>(k + 1);
  }
  if (hits == 0.0) throw DataError("average precision needs at least one positive frame");
  return sum / hits;
}

EvalReport evaluate(std::span<const LabeledScores> videos) {
  EvalReport r;
  const LabeledScores all = concatenate(videos);
  r.roc = roc_curve(all.scores, all.labels);
  r.micro_auc = auc(all.scores, all.labels);
  r.macro_auc = macro_auc(videos);
  r.ap = average_precision(all.scores, all.labels);
  r.frames = all.labels.size();
  r.positives = static_cast<std::size_t>(
      std::count_if(all.labels.begin(), all.labels.end(), [](auto l) { return l != 0; }));
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& v : videos) {
    VideoMetrics m;
    m.video_id = v.video_id;
    m.frames = v.labels.size();
    m.positives = static_cast<std::size_t>(
        std::count_if(v.labels.begin(), v.labels.end(), [](auto l) { return l != 0; }));
    m.auc = has_both_classes(v.labels) ? auc(v.scores, v.labels) : nan;
    m.ap = m.positives > 0 ? average_precision(v.scores, v.labels) : nan;
    r.videos.push_back(std::move(m));
  }
  return r;
}

namespace {

nlohmann::json number_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace

void write_report_json(const EvalReport& r, const std::filesystem::path& file) {
  using nlohmann::json;
  json videos = json::array();
  for (const auto& v : r.videos)
    videos.push_back({{"video_id", v.video_id},
                      {"frames", v.frames},
                      {"positives", v.positives},
                      {"auc", number_or_null(v.auc)},
                      {"ap", number_or_null(v.ap)}});
  const json j{{"micro_auc", number_or_null(r.micro_auc)},
               {"macro_auc", number_or_null(r.macro_auc)},
               {"ap", number_or_null(r.ap)},
               {"frames", r.frames},
               {"positives", r.positives},
               {"videos", videos}};
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

void write_roc_csv(const EvalReport& r, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << "threshold,fpr,tpr\n";
  char buf[128];
  for (const auto& p : r.roc) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    out << buf;
  }
}

}  // namespace ovad
