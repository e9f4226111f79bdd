#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ovad/dataset.hpp"

namespace ovad {

struct SpaConfig {
  double alpha = 1.0;       ///< Laplace smoothing constant, >= 0
  bool normalize = true;    ///< trim + lowercase answers before counting
};

/// Answer frequencies for one prompt on normal data, with Laplace smoothing
/// over the observed vocabulary plus one bucket for unseen answers.
class AnswerDistribution {
 public:
  AnswerDistribution() = default;
  AnswerDistribution(std::string prompt_id, std::map<std::string, std::int64_t> counts,
                     double alpha, bool normalize = true);

  const std::string& prompt_id() const { return prompt_id_; }
  const std::map<std::string, std::int64_t>& counts() const { return counts_; }
  std::int64_t total() const { return total_; }
  double alpha() const { return alpha_; }
  bool normalizes() const { return normalize_; }
  std::size_t vocabulary_size() const { return counts_.size(); }

  /// Smoothed probability; unseen answers get the unseen-bucket mass.
  double probability(const std::string& answer) const;
  double unseen_probability() const;

  /// Static anomaly score 1 - p(answer).
  double score(const std::string& answer) const;

  friend bool operator==(const AnswerDistribution&, const AnswerDistribution&) = default;

 private:
  std::string prompt_id_;
  std::map<std::string, std::int64_t> counts_;
  std::int64_t total_ = 0;
  double alpha_ = 1.0;
  bool normalize_ = true;
};

/// Lowercase and strip surrounding whitespace.
std::string normalize_answer(std::string_view answer);

AnswerDistribution fit_distribution(std::span<const Detection> detections,
                                    const std::string& prompt_id, const SpaConfig& cfg = {});

/// Shannon entropy in bits of the smoothed distribution, unseen bucket included.
double entropy(const AnswerDistribution& dist);

/// Index of the minimum-entropy prompt; ties go to the earlier prompt.
std::size_t select_prompt_index(const std::vector<AnswerDistribution>& dists);

std::string select_prompt(const PromptPool& pool, std::span<const Detection> detections,
                          const SpaConfig& cfg = {});

inline double static_object_score(const AnswerDistribution& dist, const std::string& answer) {
  return dist.score(answer);
}

/// Fitted distributions for every pool prompt plus the selected one.
struct SpaModel {
  std::string selected;
  std::vector<AnswerDistribution> distributions;

  const AnswerDistribution& selected_distribution() const;

  /// Score of a detection under the selected prompt. Throws DataError when
  /// the detection carries no answer for it.
  double score(const Detection& det) const;
};

SpaModel fit_spa(const PromptPool& pool, std::span<const Detection> detections,
                 const SpaConfig& cfg = {});

inline constexpr const char* kSpaModelFile = "spa_model.json";

void save_spa_model(const SpaModel& model, const std::filesystem::path& file);
SpaModel load_spa_model(const std::filesystem::path& file);

}  // namespace ovad
