#include "tarstop/stopping.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "tarstop/error.hpp"
#include "tarstop/log.hpp"

namespace tarstop {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string trim_number(double v) { return fmt::format("{:g}", v); }

void check_target(double target) {
  if (!(target > 0.0 && target <= 1.0)) throw ParameterError(fmt::format("recall target {} outside (0, 1]", target));
}

// Turns "fired at round r" (or never) into a decision. Firing on an exhausted
// round, or never firing on a trajectory that ran to exhaustion, stops at the
// final round with reason `exhausted`.
StoppingDecision decide(const RunTrajectory& t, std::string id, std::optional<std::size_t> fired) {
  StoppingDecision d;
  d.rule_id = std::move(id);
  if (!fired && t.exhausted()) fired = t.last_round();
  if (fired) {
    d.stop_round = *fired;
    d.s_at_stop = t.training_sizes.at(*fired);
    d.reason = t.unreviewed_after(*fired) == 0 ? StopReason::exhausted : StopReason::threshold_met;
  } else {
    d.s_at_stop = t.training_sizes.back();
    d.reason = StopReason::never;
  }
  return d;
}

std::optional<std::size_t> first_round(const RunTrajectory& t, std::size_t from, auto&& predicate) {
  for (std::size_t r = from; r < t.round_count(); ++r)
    if (predicate(r)) return r;
  return std::nullopt;
}

std::optional<std::size_t> fire_fixed(const RuleContext& ctx, const FixedIterations& c) {
  const auto& t = ctx.trajectory();
  if (c.rounds < t.round_count()) return c.rounds;
  return std::nullopt;
}

std::optional<std::size_t> fire_2399(const RuleContext& ctx, const Rule2399& c) {
  const auto& t = ctx.trajectory();
  return first_round(t, 0, [&](std::size_t r) {
    return static_cast<double>(t.training_sizes[r]) >= 2399.0 + c.x * static_cast<double>(t.cumulative_relevant[r]);
  });
}

std::optional<std::size_t> fire_batch_pos(const RuleContext& ctx, const BatchPos& c) {
  const auto& t = ctx.trajectory();
  std::size_t streak = 0;
  std::optional<std::size_t> first_hit;
  // Round 0 is the given seed, not a feedback batch.
  for (std::size_t r = 1; r < t.round_count(); ++r) {
    const bool low = t.batches[r].positive_count <= c.threshold;
    if (c.mode == PatienceMode::consecutive) {
      streak = low ? streak + 1 : 0;
      if (streak >= c.patience) return r;
    } else {
      if (low && !first_hit) first_hit = r;
      if (first_hit && r >= *first_hit + c.patience - 1) return r;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> fire_max_prob(const RuleContext& ctx, const MaxProb& c) {
  return first_round(ctx.trajectory(), 0, [&](std::size_t r) {
    if (ctx.artificial_model(r)) return false;
    const auto& m = ctx.stats(r).max_unreviewed_prob;
    return !m || *m <= c.cutoff;
  });
}

std::optional<std::size_t> fire_corr(const RuleContext& ctx, const CorrCoef& c) {
  std::vector<double> coefficients;
  return first_round(ctx.trajectory(), 1, [&](std::size_t r) {
    if (ctx.artificial_model(r - 1)) return false;
    const auto& coef = ctx.stats(r).corr_with_previous;
    if (!coef) return false;
    coefficients.push_back(*coef);
    return correlation_window_met(coefficients, c.threshold, c.window);
  });
}

std::optional<KneeGeometry> knee_at(const RuleContext& ctx, std::size_t r) {
  const auto& t = ctx.trajectory();
  return knee_point(ctx.gain_prefix(r), static_cast<std::int64_t>(t.training_sizes[r]));
}

std::optional<std::size_t> fire_knee(const RuleContext& ctx, const Knee& c) {
  const auto& t = ctx.trajectory();
  const auto schedule = knee_schedule(static_cast<std::int64_t>(t.batch_size), c.min_s,
                                      static_cast<std::int64_t>(t.doc_count));
  return first_round(t, 1, [&](std::size_t r) {
    const auto s = static_cast<std::int64_t>(t.training_sizes[r]);
    if (!std::binary_search(schedule.begin(), schedule.end(), s)) return false;
    const auto geo = knee_at(ctx, r);
    if (!geo) return false;
    const double rel = static_cast<double>(t.cumulative_relevant[r]);
    return geo->rho >= 156.0 - std::min(rel, 150.0);
  });
}

std::optional<std::size_t> fire_budget(const RuleContext& ctx) {
  const auto& t = ctx.trajectory();
  const double c = static_cast<double>(t.doc_count);
  return first_round(t, 0, [&](std::size_t r) {
    const double s = static_cast<double>(t.training_sizes[r]);
    if (s >= 0.75 * c) return true;
    const double rel = static_cast<double>(t.cumulative_relevant[r]);
    if (rel <= 0.0 || s < 10.0 * c / rel || r == 0) return false;
    const auto geo = knee_at(ctx, r);
    return geo && geo->rho >= 6.0;
  });
}

std::optional<std::size_t> fire_cmh(const RuleContext& ctx, const Cmh& c) {
  const auto& t = ctx.trajectory();
  const auto C = static_cast<std::int64_t>(t.doc_count);
  std::size_t clamps = 0;
  auto fired = first_round(t, 1, [&](std::size_t r) {
    const auto s = static_cast<std::int64_t>(t.training_sizes[r]);
    const auto rel_s = static_cast<std::int64_t>(t.cumulative_relevant[r]);
    double min_p = 1.0;
    for (std::size_t j = 0; j < r; ++j) {
      const auto s_j = static_cast<std::int64_t>(t.training_sizes[j]);
      const auto rel_j = static_cast<std::int64_t>(t.cumulative_relevant[j]);
      const std::int64_t population = C - rel_j;
      auto k_tar = static_cast<std::int64_t>(std::floor(static_cast<double>(rel_s) / c.target -
                                                        static_cast<double>(rel_j) + 1.0));
      if (k_tar < 0) continue;  // no evidence: p_j = 1
      std::int64_t draws = c.draws == CmhDraws::documents ? s - s_j : static_cast<std::int64_t>(r - j);
      if (k_tar > population) {
        k_tar = population;
        ++clamps;
      }
      if (draws > population) {
        draws = population;
        ++clamps;
      }
      min_p = std::min(min_p, hypergeometric_cdf(population, k_tar, draws, rel_s - rel_j));
    }
    return c.comparison == CmhComparison::below_complement ? min_p < 1.0 - c.alpha : min_p >= c.alpha;
  });
  if (clamps > 0)
    log_warning(fmt::format("CMH on {}: {} hypergeometric parameter(s) clamped to the population", t.run_id, clamps));
  return fired;
}

std::optional<std::size_t> fire_quant(const RuleContext& ctx, const Quant& c) {
  return first_round(ctx.trajectory(), 0, [&](std::size_t r) {
    if (ctx.artificial_model(r)) return false;
    const auto est = quant_recall(ctx.stats(r).sums);
    return est && *est >= c.target;
  });
}

std::optional<std::size_t> fire_quant_ci(const RuleContext& ctx, const QuantCi& c) {
  return first_round(ctx.trajectory(), 0, [&](std::size_t r) {
    if (ctx.artificial_model(r)) return false;
    const auto est = quant_ci(ctx.stats(r).sums, c.multiplier);
    return est && est->raw_lower >= c.target;
  });
}

struct SampleOutcome {
  std::optional<std::size_t> fired;
  std::size_t cost = 0;
};

SampleOutcome fire_sample(const RuleContext& ctx, const SampleRecall& c) {
  const auto& t = ctx.trajectory();
  if (t.relevant_total() < c.positives)
    throw ParameterError(fmt::format("sample recall needs {} positives but '{}' has {}", c.positives, t.task.id,
                                     t.relevant_total()));
  const auto labels = t.task.labels(t.doc_count);
  std::vector<DocId> order(t.doc_count);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(c.seed);
  std::vector<DocId> sampled_positives;
  SampleOutcome out;
  // Partial Fisher-Yates: draw without replacement until enough positives.
  for (std::size_t i = 0; i < order.size() && sampled_positives.size() < c.positives; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
    ++out.cost;
    if (labels[order[i]]) sampled_positives.push_back(order[i]);
  }
  std::vector<std::uint8_t> reviewed(t.doc_count, 0);
  std::size_t found = 0;
  const double k = static_cast<double>(c.positives);
  out.fired = first_round(t, 0, [&](std::size_t r) {
    for (DocId d : t.batches[r].docs) reviewed[d] = 1;
    found = 0;
    for (DocId d : sampled_positives) found += reviewed[d];
    return static_cast<double>(found) / k >= c.target;
  });
  return out;
}

}  // namespace

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::threshold_met: return "threshold-met";
    case StopReason::exhausted: return "exhausted";
    case StopReason::never: return "never";
  }
  return "?";
}

std::string rule_id(const RuleConfig& rule) {
  return std::visit(overloaded{
                        [](const FixedIterations& c) { return fmt::format("FixedIterations-{}", c.rounds); },
                        [](const Rule2399& c) {
                          return c.x == 1.2 ? std::string("2399-Rule") : "2399-Rule-" + trim_number(c.x);
                        },
                        [](const BatchPos& c) {
                          return fmt::format("BatchPos-{}-{}{}", c.threshold, c.patience,
                                             c.mode == PatienceMode::fixed_delay ? "-delay" : "");
                        },
                        [](const MaxProb& c) { return "MaxProb-" + trim_number(c.cutoff); },
                        [](const CorrCoef& c) {
                          return c.threshold == 0.99 && c.window == 3
                                     ? std::string("CorrCoef")
                                     : fmt::format("CorrCoef-{}-{}", trim_number(c.threshold), c.window);
                        },
                        [](const Knee& c) { return c.min_s == 1000 ? std::string("Knee") : fmt::format("Knee-{}", c.min_s); },
                        [](const Budget&) { return std::string("Budget"); },
                        [](const Cmh& c) {
                          std::string id = "CMH-heuristic";
                          if (c.alpha != 0.95) id += "-" + trim_number(c.alpha);
                          if (c.draws == CmhDraws::rounds) id += "-rounds";
                          if (c.comparison == CmhComparison::at_least_alpha) id += "-alt";
                          return id;
                        },
                        [](const Quant&) { return std::string("Quant"); },
                        [](const QuantCi& c) {
                          return c.multiplier == kDefaultCiMultiplier ? std::string("QuantCI")
                                                                      : "QuantCI-" + trim_number(c.multiplier);
                        },
                        [](const SampleRecall& c) { return fmt::format("SampleRecall-{}", c.positives); },
                    },
                    rule);
}

bool is_target_aware(const RuleConfig& rule) {
  return std::holds_alternative<Cmh>(rule) || std::holds_alternative<Quant>(rule) ||
         std::holds_alternative<QuantCi>(rule) || std::holds_alternative<SampleRecall>(rule);
}

RuleConfig with_target(RuleConfig rule, double target) {
  std::visit(overloaded{
                 [&](Cmh& c) { c.target = target; },
                 [&](Quant& c) { c.target = target; },
                 [&](QuantCi& c) { c.target = target; },
                 [&](SampleRecall& c) { c.target = target; },
                 [](auto&) {},
             },
             rule);
  return rule;
}

void check_rule(const RuleConfig& rule) {
  std::visit(overloaded{
                 [](const FixedIterations& c) {
                   if (c.rounds < 1) throw ParameterError("fixed iterations needs k >= 1");
                 },
                 [](const Rule2399& c) {
                   if (!(c.x >= 0.0)) throw ParameterError("2399 rule needs x >= 0");
                 },
                 [](const BatchPos& c) {
                   if (c.patience < 1) throw ParameterError("batch positives needs patience >= 1");
                 },
                 [](const MaxProb& c) {
                   if (!(c.cutoff > 0.0 && c.cutoff < 1.0)) throw ParameterError("max prob cutoff must be in (0, 1)");
                 },
                 [](const CorrCoef& c) {
                   if (c.window < 1) throw ParameterError("correlation window must be >= 1");
                   if (!(c.threshold > 0.0)) throw ParameterError("correlation threshold must be positive");
                 },
                 [](const Knee& c) {
                   if (c.min_s < 1) throw ParameterError("knee min_s must be positive");
                 },
                 [](const Budget&) {},
                 [](const Cmh& c) {
                   check_target(c.target);
                   if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ParameterError("CMH alpha must be in (0, 1)");
                 },
                 [](const Quant& c) { check_target(c.target); },
                 [](const QuantCi& c) {
                   check_target(c.target);
                   if (!(c.multiplier >= 0.0)) throw ParameterError("CI multiplier must be non-negative");
                 },
                 [](const SampleRecall& c) {
                   check_target(c.target);
                   if (c.positives < 1) throw ParameterError("sample recall needs k >= 1");
                 },
             },
             rule);
}

RuleContext::RuleContext(const RunTrajectory& trajectory) : trajectory_(trajectory) {
  if (trajectory.round_count() == 0) throw DataError("empty trajectory");
  gain_ = gain_curve(trajectory);
  stats_.resize(trajectory.round_count());
}

bool RuleContext::artificial_model(std::size_t round) const {
  // Everything reviewed so far is relevant, so training fell back on
  // artificial negatives.
  return trajectory_.cumulative_relevant.at(round) == trajectory_.training_sizes.at(round);
}

std::span<const GainPoint> RuleContext::gain_prefix(std::size_t round) const {
  return std::span<const GainPoint>(gain_).first(round + 2);
}

const RoundStats& RuleContext::stats(std::size_t round) const {
  if (!prob_done_) compute_probability_stats();
  return stats_.at(round);
}

void RuleContext::compute_probability_stats() const {
  const auto& t = trajectory_;
  std::vector<std::uint8_t> reviewed(t.doc_count, 0);
  std::vector<double> probs_r, probs_u;
  for (std::size_t r = 0; r < t.round_count(); ++r) {
    for (DocId d : t.batches[r].docs) reviewed[d] = 1;
    probs_r.clear();
    probs_u.clear();
    const auto& scores = t.model_after(r).scores;
    for (std::size_t d = 0; d < t.doc_count; ++d) {
      const double p = sigmoid(scores[d]);
      (reviewed[d] ? probs_r : probs_u).push_back(p);
    }
    stats_[r].sums = quant_sums(probs_r, probs_u);
    if (!probs_u.empty()) stats_[r].max_unreviewed_prob = *std::max_element(probs_u.begin(), probs_u.end());
  }
  prob_done_ = true;
  compute_correlations();
}

void RuleContext::compute_correlations() const {
  if (corr_done_) return;
  const auto& t = trajectory_;
  std::vector<double> prev = t.model_after(0).probabilities();
  for (std::size_t r = 1; r < t.round_count(); ++r) {
    auto cur = t.model_after(r).probabilities();
    stats_[r].corr_with_previous = pearson_corr(prev, cur);
    prev.swap(cur);
  }
  corr_done_ = true;
}

StoppingDecision evaluate_rule(const RuleConfig& rule, const RuleContext& ctx) {
  check_rule(rule);
  const auto& t = ctx.trajectory();
  auto id = rule_id(rule);
  if (const auto* s = std::get_if<SampleRecall>(&rule)) {
    auto outcome = fire_sample(ctx, *s);
    auto d = decide(t, std::move(id), outcome.fired);
    d.sample_cost = outcome.cost;
    return d;
  }
  auto fired = std::visit(overloaded{
                              [&](const FixedIterations& c) { return fire_fixed(ctx, c); },
                              [&](const Rule2399& c) { return fire_2399(ctx, c); },
                              [&](const BatchPos& c) { return fire_batch_pos(ctx, c); },
                              [&](const MaxProb& c) { return fire_max_prob(ctx, c); },
                              [&](const CorrCoef& c) { return fire_corr(ctx, c); },
                              [&](const Knee& c) { return fire_knee(ctx, c); },
                              [&](const Budget&) { return fire_budget(ctx); },
                              [&](const Cmh& c) { return fire_cmh(ctx, c); },
                              [&](const Quant& c) { return fire_quant(ctx, c); },
                              [&](const QuantCi& c) { return fire_quant_ci(ctx, c); },
                              [&](const SampleRecall&) { return std::optional<std::size_t>{}; },
                          },
                          rule);
  return decide(t, std::move(id), fired);
}

std::vector<StoppingDecision> evaluate_rules(std::span<const RuleConfig> rules, const RunTrajectory& trajectory) {
  RuleContext ctx(trajectory);
  std::vector<StoppingDecision> out;
  out.reserve(rules.size());
  for (const auto& rule : rules) out.push_back(evaluate_rule(rule, ctx));
  return out;
}

StoppingDecision fixed_iterations(const RunTrajectory& t, std::size_t rounds) {
  return evaluate_rule(FixedIterations{rounds}, RuleContext(t));
}
StoppingDecision rule_2399(const RunTrajectory& t, double x) { return evaluate_rule(Rule2399{x}, RuleContext(t)); }
StoppingDecision batch_pos(const RunTrajectory& t, std::size_t threshold, std::size_t patience, PatienceMode mode) {
  return evaluate_rule(BatchPos{threshold, patience, mode}, RuleContext(t));
}
StoppingDecision max_prob(const RunTrajectory& t, double cutoff) { return evaluate_rule(MaxProb{cutoff}, RuleContext(t)); }
StoppingDecision corr_coef(const RunTrajectory& t, double threshold, std::size_t window) {
  return evaluate_rule(CorrCoef{threshold, window}, RuleContext(t));
}
StoppingDecision knee(const RunTrajectory& t, const Knee& config) { return evaluate_rule(config, RuleContext(t)); }
StoppingDecision budget(const RunTrajectory& t) { return evaluate_rule(Budget{}, RuleContext(t)); }
StoppingDecision cmh(const RunTrajectory& t, const Cmh& config) { return evaluate_rule(config, RuleContext(t)); }
StoppingDecision quant(const RunTrajectory& t, double target) { return evaluate_rule(Quant{target}, RuleContext(t)); }
StoppingDecision quant_ci_rule(const RunTrajectory& t, double target, double multiplier) {
  return evaluate_rule(QuantCi{target, multiplier}, RuleContext(t));
}
StoppingDecision sample_recall(const RunTrajectory& t, const SampleRecall& config) {
  return evaluate_rule(config, RuleContext(t));
}

std::vector<BmiRound> bmi_schedule(std::int64_t limit) {
  // Round labels and training sizes follow the published BMI table: the
  // seed is counted on its own, then batches grow from 1. The table labels
  // the first one-document batch round 3.
  std::vector<BmiRound> out;
  std::int64_t batch = 1;
  std::int64_t size = 1 + batch;
  std::int64_t round = 3;
  out.push_back({round, batch, size});
  while (size <= limit) {
    batch += (batch + 9) / 10;
    size += batch;
    ++round;
    out.push_back({round, batch, size});
  }
  return out;
}

std::vector<std::int64_t> knee_schedule(std::int64_t batch_size, std::int64_t min_s, std::int64_t limit) {
  if (batch_size < 1) throw ParameterError("knee schedule needs batch size >= 1");
  std::vector<std::int64_t> tests;
  if (min_s > limit) return tests;
  std::vector<std::int64_t> bmi_tests;
  for (const auto& r : bmi_schedule(limit))
    if (r.training_size >= min_s) bmi_tests.push_back(r.training_size);
  if (min_s <= 1) bmi_tests.insert(bmi_tests.begin(), 1);

  std::int64_t previous = 0;
  auto consider = [&](std::int64_t checkpoint) {
    auto it = std::upper_bound(bmi_tests.begin(), bmi_tests.end(), previous);
    if (it != bmi_tests.end() && *it <= checkpoint) tests.push_back(checkpoint);
    previous = checkpoint;
  };
  for (std::int64_t s = 1; s < limit; s += batch_size) consider(s);
  consider(limit);
  return tests;
}

bool correlation_window_met(std::span<const double> coefficients, double threshold, std::size_t window) {
  if (window == 0 || coefficients.size() < window) return false;
  double sum = 0.0;
  for (std::size_t i = coefficients.size() - window; i < coefficients.size(); ++i) sum += coefficients[i];
  // Summation rounding must not decide a tie at the threshold.
  return sum / static_cast<double>(window) >= threshold - 1e-12;
}

}  // namespace tarstop
