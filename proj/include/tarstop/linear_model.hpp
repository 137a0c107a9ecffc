#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tarstop/corpus.hpp"

namespace tarstop {

enum class ExampleSource : std::uint8_t { reviewed, artificial_negative };

struct TrainingExample {
  DocId doc = 0;
  std::uint8_t label = 0;
  ExampleSource source = ExampleSource::reviewed;
};

/// Labeled documents a model is fit on. Reviewed documents appear at most
/// once; artificial negatives are random documents labeled 0 to break a
/// single-class training set.
class TrainingSet {
 public:
  void add_reviewed(DocId doc, bool relevant);
  void add_artificial_negative(DocId doc);

  std::span<const TrainingExample> examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }
  bool has_both_classes() const { return positives_ > 0 && positives_ < examples_.size(); }
  std::size_t reviewed_count() const { return reviewed_.size(); }

  /// FNV-1a over (doc, label, source) in insertion order.
  std::string fingerprint() const;

 private:
  std::vector<TrainingExample> examples_;
  std::vector<DocId> reviewed_;  // sorted
  std::size_t positives_ = 0;
};

struct TrainOptions {
  /// Objective is the summed log-loss plus (l2_weight / 2) * |w|^2; the
  /// intercept is not penalized.
  double l2_weight = 1.0;
  /// Stop when the objective gradient norm falls to this value.
  double tolerance = 1e-6;
  int max_iterations = 1000;
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  std::string training_fingerprint;

  double score(const SparseVector& x) const { return x.dot(weights) + intercept; }
  bool operator==(const LinearModel&) const = default;
};

struct TrainReport {
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  /// Objective value at the start and after every accepted step.
  std::vector<double> objective_trace;
};

struct TrainResult {
  LinearModel model;
  TrainReport report;
};

/// Deterministic Newton-CG fit with backtracking line search.
TrainResult train(const Corpus& corpus, const TrainingSet& training, const TrainOptions& options = {});

double objective(const Corpus& corpus, const TrainingSet& training, double l2_weight,
                 std::span<const double> weights, double intercept);

/// Gradient of objective(); the last element is the intercept component.
std::vector<double> objective_gradient(const Corpus& corpus, const TrainingSet& training,
                                       double l2_weight, std::span<const double> weights,
                                       double intercept);

/// Logistic function kept strictly inside (0, 1).
double sigmoid(double margin);

std::vector<double> score_all(const LinearModel& model, const Corpus& corpus);

std::vector<double> predict_proba(const LinearModel& model, const Corpus& corpus,
                                  std::span<const DocId> docs);

/// Candidates by descending score; equal scores by ascending document id.
std::vector<DocId> rank(const LinearModel& model, const Corpus& corpus,
                        std::span<const DocId> candidates);

/// rank() over precomputed per-document scores indexed by document id.
std::vector<DocId> rank_by_scores(std::span<const double> scores, std::span<const DocId> candidates);

/// Versioned JSON snapshot of a model.
std::string model_to_json(const LinearModel& model);
LinearModel model_from_json(std::string_view json);

}  // namespace tarstop
