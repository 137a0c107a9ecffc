#include "tarstop/linear_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "tarstop/error.hpp"
#include "tarstop/hash.hpp"

namespace tarstop {

void TrainingSet::add_reviewed(DocId doc, bool relevant) {
  auto it = std::lower_bound(reviewed_.begin(), reviewed_.end(), doc);
  if (it != reviewed_.end() && *it == doc)
    throw DataError("document " + std::to_string(doc) + " reviewed twice");
  reviewed_.insert(it, doc);
  examples_.push_back({doc, static_cast<std::uint8_t>(relevant ? 1 : 0), ExampleSource::reviewed});
  if (relevant) ++positives_;
}

void TrainingSet::add_artificial_negative(DocId doc) {
  examples_.push_back({doc, 0, ExampleSource::artificial_negative});
}

std::string TrainingSet::fingerprint() const {
  Fnv1a h;
  for (const auto& e : examples_) {
    h.update(static_cast<std::uint64_t>(e.doc));
    h.update(static_cast<std::uint64_t>(e.label) | (static_cast<std::uint64_t>(e.source) << 8));
  }
  return h.hex();
}

double sigmoid(double margin) {
  constexpr double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  double p;
  if (margin >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-margin));
  } else {
    const double e = std::exp(margin);
    p = e / (1.0 + e);
  }
  return std::clamp(p, lo, hi);
}

namespace {

// log(1 + exp(m)) without overflow.
double softplus(double m) { return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

// Unclamped logistic for gradient terms, where exact 0/1 limits are fine.
double logistic(double m) {
  if (m >= 0.0) return 1.0 / (1.0 + std::exp(-m));
  const double e = std::exp(m);
  return e / (1.0 + e);
}

struct Problem {
  const Corpus& corpus;
  std::span<const TrainingExample> examples;
  double l2;
  std::size_t dim;  // weights; intercept is theta[dim]

  void margins(std::span<const double> theta, std::vector<double>& out) const {
    out.resize(examples.size());
    const std::span<const double> w = theta.first(dim);
    for (std::size_t i = 0; i < examples.size(); ++i)
      out[i] = corpus.document(examples[i].doc).dot(w) + theta[dim];
  }

  double value(std::span<const double> theta, const std::vector<double>& m) const {
    double loss = 0.0;
    for (std::size_t i = 0; i < examples.size(); ++i)
      loss += softplus(m[i]) - (examples[i].label ? m[i] : 0.0);
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) sq += theta[j] * theta[j];
    return loss + 0.5 * l2 * sq;
  }

  void gradient(std::span<const double> theta, const std::vector<double>& m,
                std::vector<double>& g) const {
    g.assign(dim + 1, 0.0);
    for (std::size_t j = 0; j < dim; ++j) g[j] = l2 * theta[j];
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const double r = logistic(m[i]) - examples[i].label;
      for (const auto& e : corpus.document(examples[i].doc).entries()) g[e.feature] += r * e.weight;
      g[dim] += r;
    }
  }

  // out = H v, with curvature d_i = p_i (1 - p_i).
  void hessian_times(const std::vector<double>& d, const std::vector<double>& v,
                     std::vector<double>& out) const {
    out.assign(dim + 1, 0.0);
    const std::span<const double> vw(v.data(), dim);
    for (std::size_t j = 0; j < dim; ++j) out[j] = l2 * v[j];
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& x = corpus.document(examples[i].doc);
      const double t = d[i] * (x.dot(vw) + v[dim]);
      for (const auto& e : x.entries()) out[e.feature] += t * e.weight;
      out[dim] += t;
    }
  }
};

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_training(const Corpus& corpus, const TrainingSet& training) {
  if (training.empty()) throw DataError("empty training set");
  if (!training.has_both_classes()) throw DataError("degenerate class: training set has a single class");
  for (const auto& e : training.examples())
    if (e.doc >= corpus.doc_count()) throw DataError("training document out of range");
}

}  // namespace

double objective(const Corpus& corpus, const TrainingSet& training, double l2_weight,
                 std::span<const double> weights, double intercept) {
  if (weights.size() != corpus.vocabulary_size()) throw ParameterError("weight length mismatch");
  Problem prob{corpus, training.examples(), l2_weight, corpus.vocabulary_size()};
  std::vector<double> theta(weights.begin(), weights.end());
  theta.push_back(intercept);
  std::vector<double> m;
  prob.margins(theta, m);
  return prob.value(theta, m);
}

std::vector<double> objective_gradient(const Corpus& corpus, const TrainingSet& training,
                                       double l2_weight, std::span<const double> weights,
                                       double intercept) {
  if (weights.size() != corpus.vocabulary_size()) throw ParameterError("weight length mismatch");
  Problem prob{corpus, training.examples(), l2_weight, corpus.vocabulary_size()};
  std::vector<double> theta(weights.begin(), weights.end());
  theta.push_back(intercept);
  std::vector<double> m, g;
  prob.margins(theta, m);
  prob.gradient(theta, m, g);
  return g;
}

TrainResult train(const Corpus& corpus, const TrainingSet& training, const TrainOptions& options) {
  if (!(options.l2_weight > 0.0)) throw ParameterError("l2_weight must be positive");
  if (!(options.tolerance > 0.0)) throw ParameterError("tolerance must be positive");
  if (options.max_iterations < 1) throw ParameterError("max_iterations must be at least 1");
  check_training(corpus, training);

  const std::size_t dim = corpus.vocabulary_size();
  Problem prob{corpus, training.examples(), options.l2_weight, dim};
  const std::size_t n = training.size();

  std::vector<double> theta(dim + 1, 0.0);
  std::vector<double> m, g, d(n), step(dim + 1), r, p, hp, trial(dim + 1), trial_m;
  prob.margins(theta, m);
  double f = prob.value(theta, m);

  TrainReport report;
  report.objective_trace.push_back(f);
  prob.gradient(theta, m, g);
  double gnorm = norm(g);

  for (int iter = 0; iter < options.max_iterations && gnorm > options.tolerance; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = logistic(m[i]);
      d[i] = pi * (1.0 - pi);
    }
    // Truncated conjugate gradient on H s = -g.
    std::fill(step.begin(), step.end(), 0.0);
    r.resize(dim + 1);
    for (std::size_t j = 0; j <= dim; ++j) r[j] = -g[j];
    p = r;
    double rr = dot(r, r);
    const double forcing = std::min(0.5, std::sqrt(gnorm)) * gnorm;
    const std::size_t cg_limit = std::min<std::size_t>(dim + 1, 250);
    for (std::size_t k = 0; k < cg_limit && std::sqrt(rr) > forcing; ++k) {
      prob.hessian_times(d, p, hp);
      const double curvature = dot(p, hp);
      if (!(curvature > 0.0)) break;
      const double alpha = rr / curvature;
      for (std::size_t j = 0; j <= dim; ++j) {
        step[j] += alpha * p[j];
        r[j] -= alpha * hp[j];
      }
      const double rr_next = dot(r, r);
      const double beta = rr_next / rr;
      rr = rr_next;
      for (std::size_t j = 0; j <= dim; ++j) p[j] = r[j] + beta * p[j];
    }
    double slope = dot(g, step);
    if (!(slope < 0.0)) {
      // CG produced no descent direction; fall back to steepest descent.
      for (std::size_t j = 0; j <= dim; ++j) step[j] = -g[j];
      slope = -gnorm * gnorm;
    }

    // Armijo backtracking. Only strictly improving steps are accepted, so the
    // recorded trace is non-increasing.
    double t = 1.0;
    bool accepted = false;
    double f_trial = f;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t j = 0; j <= dim; ++j) trial[j] = theta[j] + t * step[j];
      prob.margins(trial, trial_m);
      f_trial = prob.value(trial, trial_m);
      if (f_trial <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted || !(f_trial <= f)) break;
    theta.swap(trial);
    m.swap(trial_m);
    f = f_trial;
    report.objective_trace.push_back(f);
    prob.gradient(theta, m, g);
    gnorm = norm(g);
    report.iterations = iter + 1;
  }

  report.gradient_norm = gnorm;
  report.converged = gnorm <= options.tolerance;

  TrainResult out;
  out.model.intercept = theta[dim];
  theta.resize(dim);
  out.model.weights = std::move(theta);
  out.model.training_fingerprint = training.fingerprint();
  for (double w : out.model.weights)
    if (!std::isfinite(w)) throw DataError("training diverged: non-finite weight");
  if (!std::isfinite(out.model.intercept)) throw DataError("training diverged: non-finite intercept");
  out.report = std::move(report);
  return out;
}

std::vector<double> score_all(const LinearModel& model, const Corpus& corpus) {
  if (model.weights.size() != corpus.vocabulary_size()) throw ParameterError("model/corpus vocabulary mismatch");
  std::vector<double> out(corpus.doc_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = model.score(corpus.document(static_cast<DocId>(i)));
  return out;
}

std::vector<double> predict_proba(const LinearModel& model, const Corpus& corpus,
                                  std::span<const DocId> docs) {
  if (model.weights.size() != corpus.vocabulary_size()) throw ParameterError("model/corpus vocabulary mismatch");
  std::vector<double> out;
  out.reserve(docs.size());
  for (DocId d : docs) {
    if (d >= corpus.doc_count()) throw ParameterError("document index out of range");
    out.push_back(sigmoid(model.score(corpus.document(d))));
  }
  return out;
}

std::vector<DocId> rank_by_scores(std::span<const double> scores, std::span<const DocId> candidates) {
  std::vector<DocId> out(candidates.begin(), candidates.end());
  std::sort(out.begin(), out.end(), [&](DocId a, DocId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return out;
}

std::vector<DocId> rank(const LinearModel& model, const Corpus& corpus, std::span<const DocId> candidates) {
  std::vector<double> scores(corpus.doc_count(), 0.0);
  for (DocId d : candidates) {
    if (d >= corpus.doc_count()) throw ParameterError("document index out of range");
    scores[d] = model.score(corpus.document(d));
  }
  return rank_by_scores(scores, candidates);
}

std::string model_to_json(const LinearModel& model) {
  nlohmann::json j;
  j["format"] = "tarstop-model";
  j["version"] = 1;
  j["intercept"] = model.intercept;
  j["weights"] = model.weights;
  j["training_fingerprint"] = model.training_fingerprint;
  return j.dump();
}

LinearModel model_from_json(std::string_view json) {
  try {
    auto j = nlohmann::json::parse(json);
    if (j.value("format", "") != "tarstop-model" || j.value("version", 0) != 1)
      throw DataError("not a version 1 tarstop model");
    LinearModel m;
    m.intercept = j.at("intercept").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.training_fingerprint = j.value("training_fingerprint", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model json: ") + e.what());
  }
}

}  // namespace tarstop
