#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tarstop/simulation.hpp"
#include "tarstop/stopping.hpp"

namespace tarstop {

/// Smallest k with k / R >= target.
std::size_t required_relevant(std::size_t relevant_total, double target);

/// Rel(s) / R after `round`.
double recall_at(const RunTrajectory& trajectory, std::size_t round);

struct Penalty {
  std::size_t documents = 0;
  /// Target not reachable even after reviewing every unreviewed document.
  bool unreachable = false;
};

/// Documents to review down the ranking of the model after `round` until
/// the target is reached; 0 when recall already meets it.
Penalty idealized_penalty(const RunTrajectory& trajectory, std::size_t round, double target);

/// Per-round positions (1-based) of the unreviewed relevant documents in the
/// ranking of that round's model, so penalties for many targets come cheap.
class PenaltyProfile {
 public:
  explicit PenaltyProfile(const RunTrajectory& trajectory);

  Penalty penalty(std::size_t round, double target) const;
  std::size_t round_count() const { return positions_.size(); }

 private:
  const RunTrajectory& trajectory_;
  std::vector<std::vector<std::size_t>> positions_;
};

struct OptimalCost {
  /// s at the first round whose recall meets the target. When no round
  /// does, the last round's s plus its penalty, with `reached` false.
  std::size_t cost = 0;
  std::optional<std::size_t> round;
  bool reached = false;
  /// min over rounds of s + penalty; can undercut `cost`.
  std::size_t min_total = 0;
};

OptimalCost optimal_cost(const RunTrajectory& trajectory, double target);
OptimalCost optimal_cost(const PenaltyProfile& profile, const RunTrajectory& trajectory, double target);

struct CostRecord {
  std::string run_id;
  std::string category;
  std::string prevalence_bin;
  std::string difficulty_bin;  ///< "unbinned" when unknown
  std::uint64_t seed = 0;
  std::string rule_id;
  double target = 0.0;
  std::size_t stop_round = 0;
  std::string reason;
  std::size_t reviewed = 0;
  std::size_t penalty = 0;
  std::size_t extra_sample_cost = 0;
  std::size_t total_cost = 0;
  double recall_at_stop = 0.0;
  std::size_t optimal_cost = 0;
  double cost_ratio = 0.0;
  std::size_t min_total_cost = 0;
  /// Penalty or optimal cost had to fall back to an unreached target.
  bool flagged = false;

  bool operator==(const CostRecord&) const = default;
};

/// Never-fired decisions are scored at the trajectory's last round.
CostRecord score(const RunTrajectory& trajectory, const StoppingDecision& decision, double target);
CostRecord score(const PenaltyProfile& profile, const RunTrajectory& trajectory, const StoppingDecision& decision,
                 double target);

struct AggregateCell {
  std::string rule_id;
  double target = 0.0;
  std::string prevalence_bin;  ///< "all" for the overall cell
  std::string difficulty_bin;  ///< "all" for the overall cell
  std::size_t count = 0;
  double mse_recall = 0.0;
  double mean_cost_ratio = 0.0;
  double std_cost_ratio = 0.0;  ///< sample standard deviation; 0 for one record
  /// Fraction of records with recall_at_stop >= target.
  double reliability = 0.0;
  double mean_recall = 0.0;
};

struct AggregateReport {
  /// Ordered by (rule, target).
  std::vector<AggregateCell> overall;
  /// Ordered by (rule, target, prevalence bin, difficulty bin).
  std::vector<AggregateCell> by_bin;

  const AggregateCell* find(std::string_view rule, double target) const;
};

/// Throws ParameterError on an empty input.
AggregateReport aggregate(std::span<const CostRecord> records);

std::string format_cost_records(std::span<const CostRecord> records);
std::vector<CostRecord> parse_cost_records(std::string_view csv);
void write_cost_records(const std::filesystem::path& path, std::span<const CostRecord> records);
std::vector<CostRecord> read_cost_records(const std::filesystem::path& path);

std::string aggregate_to_json(const AggregateReport& report);

}  // namespace tarstop
