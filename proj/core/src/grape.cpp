#include "deskrl/grape.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "deskrl/advantage.hpp"
#include "deskrl/error.hpp"
#include "deskrl/numerics.hpp"

namespace deskrl {

namespace {

using nlohmann::json;

double item_param(const RubricItem& item, const std::string& key, double fallback) {
  auto it = item.params.find(key);
  return it == item.params.end() ? fallback : it->second;
}

std::string token_list(std::span<const int> toks) {
  std::string s = "[";
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(toks[i]);
  }
  return s + "]";
}

class ExactMatchScorer : public Scorer {
 public:
  std::string id() const override { return "exact-match"; }
  RubricScore score(const Text& text, const RubricItem& item,
                    const std::optional<std::vector<int>>& ground_truth) const override {
    const std::vector<int>& truth = *ground_truth;
    std::span<const int> answer = text.answer();
    bool hit = answer.size() >= truth.size() &&
               std::equal(truth.begin(), truth.end(), answer.begin());
    RubricScore s;
    s.tau = hit ? 1.0 : 0.0;
    s.phi = item_param(item, "confidence", 1.0);
    s.reasoning = hit ? "answer reproduces the expected tokens " + token_list(truth)
                      : "answer " + token_list(answer) + " differs from expected " +
                            token_list(truth);
    return s;
  }
};

class MatchFractionScorer : public Scorer {
 public:
  std::string id() const override { return "match-fraction"; }
  RubricScore score(const Text& text, const RubricItem& item,
                    const std::optional<std::vector<int>>& ground_truth) const override {
    const std::vector<int>& truth = *ground_truth;
    if (truth.empty()) throw InvalidInputError("match-fraction: empty ground truth");
    std::span<const int> answer = text.answer();
    int matches = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (i < answer.size() && answer[i] == truth[i]) ++matches;
    }
    RubricScore s;
    s.tau = static_cast<double>(matches) / static_cast<double>(truth.size());
    // More compared positions = more evidence behind the score.
    double n = static_cast<double>(truth.size());
    s.phi = item_param(item, "confidence", n / (n + 1.0));
    s.reasoning = std::to_string(matches) + " of " + std::to_string(truth.size()) +
                  " expected positions matched";
    return s;
  }
};

class LengthBandScorer : public Scorer {
 public:
  std::string id() const override { return "length-band"; }
  RubricScore score(const Text& text, const RubricItem& item,
                    const std::optional<std::vector<int>>&) const override {
    int lo = static_cast<int>(item_param(item, "lo", 1.0));
    int hi = static_cast<int>(item_param(item, "hi", 1e9));
    if (lo < 0 || hi < lo) throw ConfigError("length-band: need 0 <= lo <= hi");
    int n = static_cast<int>(text.answer().size());
    int dist = n < lo ? lo - n : (n > hi ? n - hi : 0);
    RubricScore s;
    s.tau = dist == 0 ? 1.0 : 1.0 / (1.0 + static_cast<double>(dist));
    s.phi = item_param(item, "confidence", 0.75);
    s.reasoning = "answer length " + std::to_string(n) +
                  (dist == 0 ? " inside" : " outside") + " band [" + std::to_string(lo) +
                  ", " + std::to_string(hi) + "]";
    return s;
  }
};

}  // namespace

void validate_score(const RubricScore& score) {
  if (score.reasoning.empty()) throw InvalidInputError("rubric score must carry reasoning");
  if (!std::isfinite(score.tau) || score.tau < 0.0 || score.tau > 1.0) {
    throw InvalidInputError("rubric score tau out of [0,1]");
  }
  if (!std::isfinite(score.phi) || !(score.phi > 0.0) || score.phi > 1.0) {
    throw InvalidInputError("rubric confidence phi out of (0,1]");
  }
}

const std::vector<RubricItem>& Rubric::items(const std::string& category) const {
  auto it = categories.find(category);
  if (it == categories.end()) throw ConfigError("rubric has no category '" + category + "'");
  return it->second;
}

ScorerRegistry ScorerRegistry::with_builtins() {
  ScorerRegistry reg;
  reg.add(std::make_unique<ExactMatchScorer>());
  reg.add(std::make_unique<MatchFractionScorer>());
  reg.add(std::make_unique<LengthBandScorer>());
  return reg;
}

void ScorerRegistry::add(std::unique_ptr<Scorer> scorer) {
  if (contains(scorer->id())) throw ConfigError("duplicate scorer id: " + scorer->id());
  scorers_.push_back(std::move(scorer));
}

bool ScorerRegistry::contains(const std::string& id) const {
  return std::any_of(scorers_.begin(), scorers_.end(),
                     [&id](const auto& s) { return s->id() == id; });
}

const Scorer& ScorerRegistry::get(const std::string& id) const {
  for (const auto& s : scorers_) {
    if (s->id() == id) return *s;
  }
  throw ConfigError("unknown scorer: " + id);
}

RubricScore score_response(const Scorer& scorer, const Text& text, const RubricItem& item,
                           const std::optional<std::vector<int>>& ground_truth) {
  if (item.verifiable && !ground_truth.has_value()) {
    throw ConfigError("verifiable rubric item '" + item.id + "' needs ground truth");
  }
  RubricScore s = scorer.score(text, item, ground_truth);
  validate_score(s);
  return s;
}

Rubric load_rubric(const std::filesystem::path& path, const ScorerRegistry& scorers) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rubric file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed rubric " + path.string() + ": " + e.what());
  }

  Rubric rubric;
  try {
    for (const auto& [name, cat] : j.at("categories").items()) {
      std::vector<RubricItem> items;
      for (const json& ij : cat.at("items")) {
        RubricItem item;
        item.id = ij.at("id").get<std::string>();
        item.weight = ij.at("weight").get<double>();
        item.verifiable = ij.at("verifiable").get<bool>();
        item.scorer = ij.at("scorer").get<std::string>();
        if (ij.contains("params")) {
          for (const auto& [k, v] : ij.at("params").items()) {
            item.params[k] = v.get<double>();
          }
        }
        items.push_back(std::move(item));
      }
      rubric.categories[name] = std::move(items);
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed rubric " + path.string() + ": " + e.what());
  }

  for (const auto& [name, items] : rubric.categories) {
    if (items.empty()) throw ConfigError("rubric category '" + name + "' has no items");
    double wsum = 0.0;
    for (const RubricItem& item : items) {
      if (!(item.weight > 0.0) || item.weight > 1.0) {
        throw ConfigError("rubric item '" + item.id + "' weight out of (0,1]");
      }
      if (!scorers.contains(item.scorer)) {
        throw ConfigError("rubric item '" + item.id + "' names unknown scorer '" +
                          item.scorer + "'");
      }
      if (std::count_if(items.begin(), items.end(),
                        [&item](const RubricItem& o) { return o.id == item.id; }) != 1) {
        throw ConfigError("duplicate rubric item id '" + item.id + "' in '" + name + "'");
      }
      wsum += item.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) {
      throw ConfigError("rubric category '" + name + "' weights sum to " +
                        std::to_string(wsum) + ", expected 1");
    }
  }
  return rubric;
}

CategoryIndex CategoryIndex::from_labels(std::vector<std::string> labels) {
  if (labels.empty()) throw InvalidInputError("category index needs at least one sample");
  CategoryIndex idx;
  idx.labels_ = std::move(labels);
  idx.peer_set_of_sample_.resize(idx.labels_.size());
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < idx.labels_.size(); ++i) {
    auto it = std::find(seen.begin(), seen.end(), idx.labels_[i]);
    std::size_t set_id;
    if (it == seen.end()) {
      set_id = seen.size();
      seen.push_back(idx.labels_[i]);
      idx.peer_sets_.emplace_back();
    } else {
      set_id = static_cast<std::size_t>(it - seen.begin());
    }
    idx.peer_set_of_sample_[i] = set_id;
    idx.peer_sets_[set_id].push_back(i);
  }
  return idx;
}

const std::vector<std::size_t>& CategoryIndex::peers_of(std::size_t sample) const {
  if (sample >= labels_.size()) throw InvalidInputError("category index: sample out of range");
  return peer_sets_[peer_set_of_sample_[sample]];
}

double avg_confidence(const std::vector<std::vector<RubricScore>>& scores,
                      const CategoryIndex& categories, std::size_t sample,
                      std::size_t item_idx) {
  const std::vector<std::size_t>& peers = categories.peers_of(sample);
  double sum = 0.0;
  for (std::size_t k : peers) {
    if (k >= scores.size() || item_idx >= scores[k].size()) {
      throw InvalidInputError("avg_confidence: score table shape mismatch");
    }
    sum += scores[k][item_idx].phi;
  }
  return sum / static_cast<double>(peers.size());
}

double grape_reward(const std::vector<RubricScore>& scores,
                    const std::vector<double>& weights,
                    const std::vector<double>& avg_confidences, double rho) {
  if (scores.empty() || scores.size() != weights.size() ||
      scores.size() != avg_confidences.size()) {
    throw InvalidInputError("grape_reward: scores/weights/confidences shape mismatch");
  }
  if (!std::isfinite(rho) || !(rho > 0.0)) {
    throw InvalidInputError("grape_reward: rho must be finite and > 0");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    validate_score(scores[j]);
    if (!(weights[j] > 0.0) || weights[j] > 1.0) {
      throw InvalidInputError("grape_reward: weight out of (0,1]");
    }
    if (!(avg_confidences[j] > 0.0) || avg_confidences[j] > 1.0) {
      throw InvalidInputError("grape_reward: averaged confidence out of (0,1]");
    }
    num += weights[j] * scores[j].tau * avg_confidences[j];
    den += avg_confidences[j];
  }
  if (!(den > 0.0)) throw InvalidInputError("grape_reward: confidence mass is zero");
  return rho * num / den;
}

std::vector<double> grape_advantage(std::span<const double> rewards) {
  return grpo_advantage(rewards);
}

GrapeBatchScores grape_score_batch(const Rubric& rubric, const ScorerRegistry& scorers,
                                   const std::vector<Text>& texts,
                                   const CategoryIndex& categories,
                                   const std::vector<std::optional<std::vector<int>>>& truths,
                                   double rho) {
  if (texts.size() != categories.size() || texts.size() != truths.size()) {
    throw InvalidInputError("grape_score_batch: inputs disagree on sample count");
  }
  GrapeBatchScores out;
  out.scores.resize(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::vector<RubricItem>& items = rubric.items(categories.label(i));
    for (const RubricItem& item : items) {
      out.scores[i].push_back(
          score_response(scorers.get(item.scorer), texts[i], item, truths[i]));
    }
  }
  out.avg_conf.resize(texts.size());
  out.rewards.resize(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const std::vector<RubricItem>& items = rubric.items(categories.label(i));
    std::vector<double> weights;
    for (const RubricItem& item : items) weights.push_back(item.weight);
    for (std::size_t j = 0; j < items.size(); ++j) {
      out.avg_conf[i].push_back(avg_confidence(out.scores, categories, i, j));
    }
    out.rewards[i] = grape_reward(out.scores[i], weights, out.avg_conf[i], rho);
    if (out.rewards[i] < 0.0 || out.rewards[i] > rho) ++out.out_of_range;
  }
  return out;
}

LemmaVariances lemma_variances(std::span<const double> sigmas) {
  if (sigmas.empty()) throw InvalidInputError("lemma_variances: empty spread list");
  double rho = static_cast<double>(sigmas.size());
  double sum_sq = 0.0;
  double sum_inv = 0.0;
  for (double s : sigmas) {
    if (!std::isfinite(s) || !(s > 0.0)) {
      throw InvalidInputError("lemma_variances: spreads must be finite and > 0");
    }
    sum_sq += s * s;
    sum_inv += 1.0 / (s * s);
  }
  return LemmaVariances{sum_sq / (rho * rho), 1.0 / sum_inv};
}

LemmaVariances simulate_lemma(std::span<const double> sigmas, int trials, RngState& rng) {
  if (trials < 2) throw InvalidInputError("simulate_lemma: need at least 2 trials");
  LemmaVariances closed = lemma_variances(sigmas);
  (void)closed;  // argument validation only

  double rho = static_cast<double>(sigmas.size());
  std::vector<double> w(sigmas.size());
  double wsum = 0.0;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    w[i] = 1.0 / (sigmas[i] * sigmas[i]);
    wsum += w[i];
  }

  std::vector<double> plain(static_cast<std::size_t>(trials));
  std::vector<double> weighted(static_cast<std::size_t>(trials));
  for (int t = 0; t < trials; ++t) {
    RngState stream = rng.derive(static_cast<std::uint64_t>(t));
    double sum = 0.0;
    double wsum_x = 0.0;
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
      double x = sigmas[i] * stream.next_gaussian();
      sum += x;
      wsum_x += w[i] * x;
    }
    plain[static_cast<std::size_t>(t)] = sum / rho;
    weighted[static_cast<std::size_t>(t)] = wsum_x / wsum;
  }

  auto sample_variance = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(xs.size() - 1);
  };
  return LemmaVariances{sample_variance(plain), sample_variance(weighted)};
}

}  // namespace deskrl
