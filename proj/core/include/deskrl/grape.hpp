#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "deskrl/rng.hpp"
#include "deskrl/text.hpp"

namespace deskrl {

// One criterion inside a category's rubric. Weights within a category are
// positive and sum to one; `verifiable` items require ground truth and are
// scored programmatically, the rest are judged by heuristics.
struct RubricItem {
  std::string id;
  double weight = 1.0;
  bool verifiable = true;
  std::string scorer;
  std::map<std::string, double> params;
};

// What a scorer hands back for one (response, item) pair: a human-readable
// justification, a score in [0,1], and a confidence in (0,1].
struct RubricScore {
  std::string reasoning;
  double tau = 0.0;
  double phi = 1.0;
};

void validate_score(const RubricScore& score);

// category name -> its rubric items.
struct Rubric {
  std::map<std::string, std::vector<RubricItem>> categories;

  const std::vector<RubricItem>& items(const std::string& category) const;
};

// Pluggable scoring backends, looked up by id. Built-ins:
//   exact-match     tau = 1 iff the answer reproduces the ground truth
//   match-fraction  tau = fraction of ground-truth positions matched
//   length-band     tau from answer length alone (no ground truth needed)
// Scorers are deterministic: same inputs, same score.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string id() const = 0;
  virtual RubricScore score(const Text& text, const RubricItem& item,
                            const std::optional<std::vector<int>>& ground_truth) const = 0;
};

class ScorerRegistry {
 public:
  static ScorerRegistry with_builtins();
  void add(std::unique_ptr<Scorer> scorer);
  bool contains(const std::string& id) const;
  const Scorer& get(const std::string& id) const;

 private:
  std::vector<std::unique_ptr<Scorer>> scorers_;
};

// Scores one response against one item, enforcing the result invariants.
// Verifiable items without ground truth are a configuration error.
RubricScore score_response(const Scorer& scorer, const Text& text, const RubricItem& item,
                           const std::optional<std::vector<int>>& ground_truth);

// Loads and validates a rubric registry JSON file:
// {"categories": {"<name>": {"items": [{"id", "weight", "verifiable",
//  "scorer", "params"?}, ...]}}}
Rubric load_rubric(const std::filesystem::path& path, const ScorerRegistry& scorers);

// Which samples count as peers when averaging confidences: all samples
// whose response category matches. peers_of(i) always contains i, and the
// peer sets partition the batch.
class CategoryIndex {
 public:
  static CategoryIndex from_labels(std::vector<std::string> labels);
  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t sample) const { return labels_[sample]; }
  const std::vector<std::size_t>& peers_of(std::size_t sample) const;

 private:
  std::vector<std::string> labels_;
  std::vector<std::size_t> peer_set_of_sample_;
  std::vector<std::vector<std::size_t>> peer_sets_;
};

// Mean confidence of item `item_idx` across the category peers of `sample`.
// `scores[k]` holds sample k's per-item scores (same item list for peers).
double avg_confidence(const std::vector<std::vector<RubricScore>>& scores,
                      const CategoryIndex& categories, std::size_t sample,
                      std::size_t item_idx);

// Confidence-weighted rubric aggregation for one response:
//   R = rho * sum_j w_j tau_j phibar_j / sum_j phibar_j.
// rho rescales the unit-interval aggregate to the advantage scale.
double grape_reward(const std::vector<RubricScore>& scores,
                    const std::vector<double>& weights,
                    const std::vector<double>& avg_confidences, double rho);

// Group-relative advantages over rubric rewards; identical computation to
// grpo_advantage by design.
std::vector<double> grape_advantage(std::span<const double> rewards);

// Everything the trainer needs from scoring one batch of responses.
struct GrapeBatchScores {
  std::vector<std::vector<RubricScore>> scores;  // [sample][item]
  std::vector<std::vector<double>> avg_conf;     // [sample][item]
  std::vector<double> rewards;                   // [sample]
  int out_of_range = 0;  // diagnostics: rewards outside [0, rho]
};

GrapeBatchScores grape_score_batch(const Rubric& rubric, const ScorerRegistry& scorers,
                                   const std::vector<Text>& texts,
                                   const CategoryIndex& categories,
                                   const std::vector<std::optional<std::vector<int>>>& truths,
                                   double rho);

// Closed-form variances behind the weighting argument: for independent
// per-item scores with spreads sigma_i, the plain average of rho scores has
// variance (1/rho^2) sum sigma_i^2, while the inverse-variance-weighted
// mean achieves 1 / sum (1/sigma_i^2), which is never larger and equal only
// when all spreads coincide.
struct LemmaVariances {
  double unweighted = 0.0;
  double weighted = 0.0;
};

LemmaVariances lemma_variances(std::span<const double> sigmas);

// Simulated estimator variances for the same setup, for cross-checking the
// closed forms against an actual sampling experiment.
LemmaVariances simulate_lemma(std::span<const double> sigmas, int trials, RngState& rng);

}  // namespace deskrl
