#include "ovad/spa.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ovad/error.hpp"

namespace ovad {

using nlohmann::json;

std::string normalize_answer(std::string_view answer) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = answer.size();
  while (b < e && is_space(static_cast<unsigned char>(answer[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(answer[e - 1]))) --e;
  std::string out(answer.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

AnswerDistribution::AnswerDistribution(std::string prompt_id,
                                       std::map<std::string, std::int64_t> counts,
                                       double alpha, bool normalize)
    : prompt_id_(std::move(prompt_id)), counts_(std::move(counts)), alpha_(alpha),
      normalize_(normalize) {
  if (!(alpha_ >= 0.0) || !std::isfinite(alpha_)) throw ConfigError("spa alpha must be >= 0");
  for (const auto& [answer, n] : counts_) {
    if (n < 0) throw DataError("negative answer count for '" + answer + "'");
    total_ += n;
  }
}

double AnswerDistribution::probability(const std::string& answer) const {
  const double denom = static_cast<double>(total_) +
                       alpha_ * static_cast<double>(counts_.size() + 1);
  const auto it = counts_.find(normalize_ ? normalize_answer(answer) : answer);
  const double n = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return (n + alpha_) / denom;
}

double AnswerDistribution::unseen_probability() const {
  return alpha_ / (static_cast<double>(total_) + alpha_ * static_cast<double>(counts_.size() + 1));
}

double AnswerDistribution::score(const std::string& answer) const {
  return 1.0 - probability(answer);
}

AnswerDistribution fit_distribution(std::span<const Detection> detections,
                                    const std::string& prompt_id, const SpaConfig& cfg) {
  if (detections.empty())
    throw DataError("cannot fit answer distribution for '" + prompt_id + "': no detections");
  std::map<std::string, std::int64_t> counts;
  for (const auto& d : detections) {
    const auto it = d.answers.find(prompt_id);
    if (it == d.answers.end())
      throw DataError("detection at frame " + std::to_string(d.frame) +
                      " has no answer for prompt '" + prompt_id + "'");
    ++counts[cfg.normalize ? normalize_answer(it->second) : it->second];
  }
  return AnswerDistribution(prompt_id, std::move(counts), cfg.alpha, cfg.normalize);
}

double entropy(const AnswerDistribution& dist) {
  double h = 0.0;
  auto add = [&h](double p) {
    if (p > 0.0) h -= p * std::log2(p);
  };
  const double denom = static_cast<double>(dist.total()) +
                       dist.alpha() * static_cast<double>(dist.vocabulary_size() + 1);
  for (const auto& [answer, n] : dist.counts()) add((static_cast<double>(n) + dist.alpha()) / denom);
  add(dist.unseen_probability());
  return h;
}

std::size_t select_prompt_index(const std::vector<AnswerDistribution>& dists) {
  if (dists.empty()) throw ConfigError("prompt pool is empty");
  std::size_t best = 0;
  double best_h = entropy(dists[0]);
  for (std::size_t i = 1; i < dists.size(); ++i) {
    const double h = entropy(dists[i]);
    if (h < best_h) {
      best = i;
      best_h = h;
    }
  }
  return best;
}

std::string select_prompt(const PromptPool& pool, std::span<const Detection> detections,
                          const SpaConfig& cfg) {
  return fit_spa(pool, detections, cfg).selected;
}

const AnswerDistribution& SpaModel::selected_distribution() const {
  for (const auto& d : distributions)
    if (d.prompt_id() == selected) return d;
  throw DataError("spa model has no distribution for selected prompt '" + selected + "'");
}

double SpaModel::score(const Detection& det) const {
  const auto it = det.answers.find(selected);
  if (it == det.answers.end())
    throw DataError("detection at frame " + std::to_string(det.frame) +
                    " has no answer for prompt '" + selected + "'");
  return selected_distribution().score(it->second);
}

SpaModel fit_spa(const PromptPool& pool, std::span<const Detection> detections,
                 const SpaConfig& cfg) {
  if (pool.prompts.empty()) throw ConfigError("prompt pool is empty");
  SpaModel model;
  for (const auto& p : pool.prompts)
    model.distributions.push_back(fit_distribution(detections, p.id, cfg));
  model.selected = pool.prompts[select_prompt_index(model.distributions)].id;
  return model;
}

void save_spa_model(const SpaModel& model, const std::filesystem::path& file) {
  json dists = json::array();
  for (const auto& d : model.distributions)
    dists.push_back({{"prompt_id", d.prompt_id()},
                     {"counts", d.counts()},
                     {"alpha", d.alpha()},
                     {"normalize", d.normalizes()},
                     {"entropy_bits", entropy(d)}});
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + file.string());
  out << json{{"selected", model.selected}, {"distributions", dists}}.dump(2) << "\n";
}

SpaModel load_spa_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  try {
    const json j = json::parse(in);
    SpaModel model;
    model.selected = j.at("selected").get<std::string>();
    for (const auto& d : j.at("distributions"))
      model.distributions.emplace_back(d.at("prompt_id").get<std::string>(),
                                       d.at("counts").get<std::map<std::string, std::int64_t>>(),
                                       d.at("alpha").get<double>(),
                                       d.value("normalize", true));
    model.selected_distribution();
    return model;
  } catch (const json::exception& e) {
    throw DataError(file.string() + ": malformed spa model: " + e.what());
  }
}

}  // namespace ovad
