#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tarstop/corpus.hpp"
#include "tarstop/evaluation.hpp"
#include "tarstop/simulation.hpp"
#include "tarstop/stopping.hpp"

namespace tarstop {

struct SyntheticCategory {
  std::string id;
  double prevalence = 0.01;
  double separation = 0.5;
};

/// One generated collection per category.
struct SyntheticSource {
  std::size_t doc_count = 5000;
  std::size_t vocabulary_size = 2000;
  std::vector<SyntheticCategory> categories;
};

/// The 3 x 3 prevalence x difficulty grid used by default.
std::vector<SyntheticCategory> default_synthetic_grid();

/// svmlight collection described by a manifest; relative paths resolve
/// against the config file's directory.
struct FileSource {
  std::filesystem::path manifest;
};

/// Knee, Budget, 2399-Rule, CorrCoef, MaxProb-0.1, BatchPos-20-1,
/// BatchPos-20-4, CMH-heuristic, Quant, QuantCI.
std::vector<RuleConfig> default_rules();

struct ExperimentConfig {
  std::variant<SyntheticSource, FileSource> corpus = SyntheticSource{5000, 2000, default_synthetic_grid()};
  std::size_t seeds_per_category = 10;
  std::size_t batch_size = 200;
  std::optional<std::size_t> max_rounds;
  std::size_t artificial_negatives = 100;
  TrainOptions train;
  double k1 = 1.2;
  BinEdges bins;
  /// Holdout fraction for the R-precision probe; tasks without a difficulty
  /// bin are probed.
  double probe_train_fraction = 0.5;
  std::vector<RuleConfig> rules = default_rules();
  std::vector<double> targets{0.1, 0.3, 0.5, 0.7, 0.9};
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 20240101;
};

/// Throws ConfigError on a missing or out-of-range field, an unknown key, an
/// empty rule or target list.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);
void check_config(const ExperimentConfig& config);

RuleConfig rule_from_json(std::string_view json_text);
std::string rule_to_json(const RuleConfig& rule);

/// Hash of every setting that shapes the trajectories (not rules, targets,
/// output location).
std::string simulation_fingerprint(const ExperimentConfig& config);

struct SimulateOptions {
  std::size_t workers = 1;
  /// Reuse archives whose fingerprint matches; otherwise recompute all.
  bool resume = true;
  /// Replace unreadable or stale archives instead of refusing.
  bool discard_corrupt = false;
};

struct SimulateSummary {
  std::size_t runs = 0;
  std::size_t computed = 0;
  std::size_t reused = 0;
  std::vector<std::string> run_ids;
};

/// Writes <output>/trajectories/<run_id>.jsonl and <output>/trajectories/index.json.
SimulateSummary simulate(const ExperimentConfig& config, const SimulateOptions& options = {});

struct EvaluateSummary {
  std::size_t runs = 0;
  std::size_t records = 0;
};

/// Reads only the archive; writes <output>/results/{cost_records.csv,
/// aggregate.json, cost_dynamics.csv}.
EvaluateSummary evaluate(const ExperimentConfig& config, std::size_t workers = 1);

/// All cost records of one trajectory, ordered by rule then target.
std::vector<CostRecord> evaluate_trajectory(const RunTrajectory& trajectory, std::span<const RuleConfig> rules,
                                            std::span<const double> targets);

/// Reads only <results_dir>; writes tables and plot data into `report_dir`
/// and returns the human-readable text.
std::string report(const std::filesystem::path& results_dir, const std::filesystem::path& report_dir);

}  // namespace tarstop
