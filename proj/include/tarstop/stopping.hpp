#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tarstop/estimators.hpp"
#include "tarstop/simulation.hpp"

namespace tarstop {

// Rule configurations. Target-aware rules carry their recall target.

struct FixedIterations {
  std::size_t rounds = 10;
};

struct Rule2399 {
  double x = 1.2;
};

enum class PatienceMode {
  consecutive,  ///< stop at the patience-th consecutive qualifying batch
  fixed_delay,  ///< stop patience-1 rounds after the first qualifying batch
};

struct BatchPos {
  std::size_t threshold = 20;
  std::size_t patience = 1;
  PatienceMode mode = PatienceMode::consecutive;
};

struct MaxProb {
  double cutoff = 0.1;
};

struct CorrCoef {
  double threshold = 0.99;
  std::size_t window = 3;
};

struct Knee {
  std::int64_t min_s = 1000;
};

struct Budget {};

enum class CmhDraws {
  documents,  ///< n = s - s_j
  rounds,     ///< n = r - j
};

enum class CmhComparison {
  below_complement,  ///< stop when min_j p_j < 1 - alpha
  at_least_alpha,    ///< stop when min_j p_j >= alpha
};

struct Cmh {
  double target = 0.7;
  double alpha = 0.95;
  CmhDraws draws = CmhDraws::documents;
  CmhComparison comparison = CmhComparison::below_complement;
};

struct Quant {
  double target = 0.7;
};

struct QuantCi {
  double target = 0.7;
  double multiplier = kDefaultCiMultiplier;
};

struct SampleRecall {
  double target = 0.7;
  std::size_t positives = 20;
  std::uint64_t seed = 0;
};

using RuleConfig = std::variant<FixedIterations, Rule2399, BatchPos, MaxProb, CorrCoef, Knee, Budget, Cmh,
                                Quant, QuantCi, SampleRecall>;

/// Stable identifier such as "Knee", "BatchPos-20-4", "QuantCI".
std::string rule_id(const RuleConfig& rule);
bool is_target_aware(const RuleConfig& rule);
/// Copy of `rule` with its target replaced; target-agnostic rules unchanged.
RuleConfig with_target(RuleConfig rule, double target);
/// Throws ParameterError when a field is outside its documented range.
void check_rule(const RuleConfig& rule);

enum class StopReason { threshold_met, exhausted, never };
std::string_view to_string(StopReason reason);

struct StoppingDecision {
  std::string rule_id;
  /// Round after which review stops; nullopt when the rule never fired on a
  /// trajectory that ended before exhausting the collection.
  std::optional<std::size_t> stop_round;
  std::size_t s_at_stop = 0;
  StopReason reason = StopReason::never;
  /// Documents labeled outside the review to support the rule.
  std::size_t sample_cost = 0;

  bool operator==(const StoppingDecision&) const = default;
};

/// Per-round quantities shared by the probability-based rules. Round r
/// uses the model trained on everything reviewed through round r.
struct RoundStats {
  QuantSums sums;
  std::optional<double> max_unreviewed_prob;
  /// Correlation of full-collection probabilities after rounds r-1 and r.
  std::optional<double> corr_with_previous;
};

/// Lazily computed per-round statistics over one trajectory, so a bank of
/// rules touches each snapshot once. Not thread-safe; use one per thread.
class RuleContext {
 public:
  explicit RuleContext(const RunTrajectory& trajectory);

  const RunTrajectory& trajectory() const { return trajectory_; }
  const RoundStats& stats(std::size_t round) const;
  /// The model after `round` was fit with artificial negatives because no
  /// true negative had been reviewed; probability rules skip such rounds.
  bool artificial_model(std::size_t round) const;
  /// Gain curve through `round`.
  std::span<const GainPoint> gain_prefix(std::size_t round) const;

 private:
  void compute_probability_stats() const;
  void compute_correlations() const;

  const RunTrajectory& trajectory_;
  std::vector<GainPoint> gain_;
  mutable std::vector<RoundStats> stats_;
  mutable bool prob_done_ = false;
  mutable bool corr_done_ = false;
};

StoppingDecision evaluate_rule(const RuleConfig& rule, const RuleContext& context);
std::vector<StoppingDecision> evaluate_rules(std::span<const RuleConfig> rules, const RunTrajectory& trajectory);

StoppingDecision fixed_iterations(const RunTrajectory& trajectory, std::size_t rounds);
StoppingDecision rule_2399(const RunTrajectory& trajectory, double x = 1.2);
StoppingDecision batch_pos(const RunTrajectory& trajectory, std::size_t threshold = 20, std::size_t patience = 1,
                           PatienceMode mode = PatienceMode::consecutive);
StoppingDecision max_prob(const RunTrajectory& trajectory, double cutoff = 0.1);
StoppingDecision corr_coef(const RunTrajectory& trajectory, double threshold = 0.99, std::size_t window = 3);
StoppingDecision knee(const RunTrajectory& trajectory, const Knee& config = {});
StoppingDecision budget(const RunTrajectory& trajectory);
StoppingDecision cmh(const RunTrajectory& trajectory, const Cmh& config);
StoppingDecision quant(const RunTrajectory& trajectory, double target);
StoppingDecision quant_ci_rule(const RunTrajectory& trajectory, double target,
                               double multiplier = kDefaultCiMultiplier);
StoppingDecision sample_recall(const RunTrajectory& trajectory, const SampleRecall& config);

/// Training sizes at which the knee test runs for fixed batches of
/// `batch_size` after a one-document seed round. A fixed checkpoint tests
/// when some BMI round-end size c >= min_s falls in (previous checkpoint,
/// checkpoint]. Checkpoints stop at `limit` (the collection size), which is
/// itself a checkpoint for the final short batch.
std::vector<std::int64_t> knee_schedule(std::int64_t batch_size, std::int64_t min_s, std::int64_t limit);

struct BmiRound {
  std::int64_t round = 0;
  std::int64_t batch = 0;
  std::int64_t training_size = 0;
};

/// BMI exponential schedule as tabulated for that system: the seed counts
/// on its own, the first batch (labelled round 3) has one document, then
/// B_k = B_{k-1} + ceil(B_{k-1} / 10), until the training size exceeds `limit`.
std::vector<BmiRound> bmi_schedule(std::int64_t limit);

/// True when the mean of the last `window` coefficients reaches `threshold`.
bool correlation_window_met(std::span<const double> coefficients, double threshold, std::size_t window);

}  // namespace tarstop
