#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tarstop/corpus.hpp"
#include "tarstop/linear_model.hpp"

namespace tarstop {

/// Documents reviewed in one round. Round 0 is the single seed positive.
struct BatchRecord {
  std::size_t round = 0;
  std::vector<DocId> docs;
  std::vector<std::uint8_t> labels;
  std::size_t positive_count = 0;
};

/// Model scores (logit margins) for every collection document. `round` is
/// the round whose batch this snapshot selects; the snapshot was trained on
/// everything reviewed before that round.
struct ScoreSnapshot {
  std::size_t round = 0;
  std::vector<double> scores;

  double probability(DocId doc) const { return sigmoid(scores[doc]); }
  std::vector<double> probabilities() const;
};

/// One recorded relevance-feedback run.
///
/// For k = 0 .. round_count()-1: batches[k] is reviewed in round k,
/// training_sizes[k] = s after round k, cumulative_relevant[k] = Rel(s), and
/// model_after(k) is the snapshot trained on everything reviewed through
/// round k (it selects batch k+1 when one follows).
struct RunTrajectory {
  std::string run_id;
  std::string fingerprint;
  CategoryTask task;
  std::size_t doc_count = 0;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  std::vector<BatchRecord> batches;
  std::vector<std::size_t> cumulative_relevant;
  std::vector<std::size_t> training_sizes;
  std::vector<ScoreSnapshot> snapshots;

  std::size_t round_count() const { return batches.size(); }
  std::size_t last_round() const { return batches.size() - 1; }
  std::size_t relevant_total() const { return task.relevant_count(); }
  bool exhausted() const { return !training_sizes.empty() && training_sizes.back() == doc_count; }
  const ScoreSnapshot& model_after(std::size_t round) const { return snapshots.at(round); }
  std::size_t unreviewed_after(std::size_t round) const { return doc_count - training_sizes.at(round); }

  /// 0/1 per document: reviewed by the end of `round`.
  std::vector<std::uint8_t> reviewed_mask(std::size_t round) const;
};

/// Throws DataError describing the first violated invariant.
void validate(const RunTrajectory& trajectory);

struct RunOptions {
  std::size_t batch_size = 200;
  /// Feedback rounds after the seed round; default ceil(C / batch_size).
  std::optional<std::size_t> max_rounds;
  /// Random documents labeled negative while no true negative is reviewed.
  std::size_t artificial_negatives = 100;
  TrainOptions train;
};

/// Runs the one-phase relevance-feedback loop. Deterministic given
/// (corpus, task, seed, options).
RunTrajectory run(const Corpus& corpus, const CategoryTask& task, std::uint64_t seed,
                  const RunOptions& options = {});

struct GainPoint {
  std::int64_t reviewed = 0;  ///< s
  std::int64_t relevant = 0;  ///< Rel(s)
  bool operator==(const GainPoint&) const = default;
};

/// (0,0) followed by one point per round.
std::vector<GainPoint> gain_curve(const RunTrajectory& trajectory);

/// Gain curve truncated after `round`.
std::vector<GainPoint> gain_curve(const RunTrajectory& trajectory, std::size_t round);

/// JSON-lines archive: header, one line per round, checksum trailer.
void write_trajectory(const std::filesystem::path& path, const RunTrajectory& trajectory);
std::string format_trajectory(const RunTrajectory& trajectory);
RunTrajectory read_trajectory(const std::filesystem::path& path);
RunTrajectory parse_trajectory(std::string_view text);

struct VerifyResult {
  bool ok = false;
  std::string message;
};

/// Checks the checksum, the trajectory invariants, and that every batch is
/// the top of its snapshot's ranking over the then-unreviewed documents.
VerifyResult verify_trajectory(const std::filesystem::path& path);
VerifyResult verify_trajectory(const RunTrajectory& trajectory);

}  // namespace tarstop
