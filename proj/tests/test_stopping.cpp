#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "tarstop/corpus.hpp"
#include "tarstop/error.hpp"
#include "tarstop/log.hpp"
#include "tarstop/stopping.hpp"
#include "test_support.hpp"

using namespace tarstop;
using testing::build_trajectory;

namespace {

// Recall estimate after round r straight from the snapshot probabilities.
double quant_oracle(const RunTrajectory& t, std::size_t r) {
  const auto mask = t.reviewed_mask(r);
  std::vector<double> rev, unrev;
  for (DocId d = 0; d < t.doc_count; ++d) (mask[d] ? rev : unrev).push_back(t.model_after(r).probability(d));
  return *quant_recall(rev, unrev);
}

// 4000 documents, 300 relevant, batches of 200; the gain curve flattens
// after round 3.
RunTrajectory flattening() {
  std::vector<std::size_t> pos{1, 150, 100, 40, 5};
  pos.resize(12, 0);
  return build_trajectory(4000, 300, 200, pos);
}

}  // namespace

TEST_CASE("BMI schedule reproduces the tabulated rows") {
  const auto s = bmi_schedule(3000);
  auto row = [&](std::int64_t round) {
    auto it = std::find_if(s.begin(), s.end(), [&](const BmiRound& r) { return r.round == round; });
    REQUIRE(it != s.end());
    return *it;
  };
  CHECK(row(3).batch == 1);
  CHECK(row(3).training_size == 2);
  CHECK(row(34).training_size == 1106);
  CHECK(row(33).batch == 104);
  CHECK(row(33).training_size == 991);
  CHECK(row(43).batch == 275);
  CHECK(row(43).training_size == 2842);
  CHECK(s.back().training_size > 3000);
}

TEST_CASE("knee schedule for fixed batches") {
  CHECK(knee_schedule(200, 1000, 3001) ==
        std::vector<std::int64_t>{1201, 1401, 1601, 1801, 2001, 2201, 2401, 2601, 3001});
  CHECK(knee_schedule(200, 5000, 3001).empty());
  CHECK_THROWS_AS(knee_schedule(0, 1000, 3001), ParameterError);
}

TEST_CASE("fixed iterations and exhaustion") {
  const auto t = build_trajectory(2000, 200, 100, {1, 10, 10, 10, 10});
  const auto d = fixed_iterations(t, 3);
  CHECK(d.stop_round == 3u);
  CHECK(d.s_at_stop == 301);
  CHECK(d.reason == StopReason::threshold_met);
  const auto never = fixed_iterations(t, 10);
  CHECK(!never.stop_round);
  CHECK(never.reason == StopReason::never);
  CHECK(never.s_at_stop == 401);

  const auto full = build_trajectory(100, 10, 33, {1, 5, 4, 0});
  REQUIRE(full.exhausted());
  const auto e = fixed_iterations(full, 10);
  CHECK(e.stop_round == 3u);
  CHECK(e.reason == StopReason::exhausted);
}

TEST_CASE("BatchPos patience") {
  const auto t = build_trajectory(2000, 200, 100, {1, 15, 30, 15, 15, 15, 15});
  CHECK(batch_pos(t, 20, 4).stop_round == 6u);
  CHECK(batch_pos(t, 20, 1).stop_round == 1u);
  CHECK(batch_pos(t, 20, 4, PatienceMode::fixed_delay).stop_round == 4u);
  CHECK(!batch_pos(t, 10, 1).stop_round);
}

TEST_CASE("2399 rule") {
  std::vector<std::size_t> pos{1, 20, 20, 20, 20, 10, 5};
  pos.resize(20, 0);
  const auto t = build_trajectory(5000, 100, 200, pos);
  std::optional<std::size_t> want;
  for (std::size_t r = 0; r < t.round_count() && !want; ++r)
    if (t.training_sizes[r] >= 2399.0 + 1.2 * t.cumulative_relevant[r]) want = r;
  REQUIRE(want);
  CHECK(rule_2399(t).stop_round == want);
  CHECK(*rule_2399(t, 3.0).stop_round >= *want);
}

TEST_CASE("MaxProb skips the artificial-negative model") {
  auto t = build_trajectory(1000, 50, 100, {1, 20, 20, 5, 3, 1, 0});
  for (std::size_t r = 0; r < t.round_count(); ++r) {
    const auto mask = t.reviewed_mask(r);
    const double low = r == 0 || r >= 4 ? 0.05 : 0.5;
    testing::set_probabilities(t, r, [&](DocId d) { return mask[d] ? 0.9 : low; });
  }
  const auto d = max_prob(t, 0.1);
  CHECK(d.stop_round == 4u);
  CHECK(d.rule_id == "MaxProb-0.1");
}

TEST_CASE("CorrCoef needs a full window of stable models") {
  const auto t = build_trajectory(1000, 50, 100, {1, 20, 20, 5, 3, 1, 0});
  // Identical snapshots give coefficient 1 from round 2 on (round 1 compares
  // against the artificial model).
  CHECK(corr_coef(t).stop_round == 4u);
  CHECK(corr_coef(t, 0.99, 1).stop_round == 2u);
  CHECK(correlation_window_met(std::vector<double>{0.98, 1.0, 0.99}, 0.99, 3));
  CHECK(!correlation_window_met(std::vector<double>{0.95, 1.0, 0.99}, 0.99, 3));
  CHECK(!correlation_window_met(std::vector<double>{1.0, 1.0}, 0.99, 3));
}

TEST_CASE("Knee tests only on scheduled sizes") {
  const auto t = flattening();
  const auto d = knee(t);
  REQUIRE(d.stop_round);
  CHECK(*d.stop_round == 6);
  CHECK(d.s_at_stop == 1201);
  // The rho condition holds from round 5 (s = 1001), which is not scheduled.
  RuleContext ctx(t);
  const auto geo = knee_point(ctx.gain_prefix(5), 1001);
  REQUIRE(geo);
  CHECK(geo->rho >= 6.0);
}

TEST_CASE("Budget") {
  const auto t = flattening();
  CHECK(budget(t).stop_round == 5u);
  // With nothing relevant beyond the seed only the 75% cap can fire.
  std::vector<std::size_t> none{1};
  none.resize(18, 0);
  const auto flat = build_trajectory(2000, 1, 100, none);
  const auto d = budget(flat);
  REQUIRE(d.stop_round);
  CHECK(flat.training_sizes[*d.stop_round] >= 1500);
  CHECK(flat.training_sizes[*d.stop_round - 1] < 1500);
}

TEST_CASE("CMH matches the hypergeometric bound") {
  // All 20 relevant documents are found by round 1; later batches are empty.
  std::vector<std::size_t> pos{1, 19};
  pos.resize(10, 0);
  const auto t = build_trajectory(1000, 20, 100, pos);
  // For j = 1 the bound is P(X = 0) over s - s_1 draws; every other j gives
  // a larger p.
  const std::int64_t k_tar = static_cast<std::int64_t>(std::floor(20 / 0.7 - 20 + 1));
  std::optional<std::size_t> want;
  for (std::size_t r = 2; r < t.round_count() && !want; ++r)
    if (hypergeometric_cdf(980, k_tar, static_cast<std::int64_t>(100 * (r - 1)), 0) < 0.05) want = r;
  REQUIRE(want);
  CHECK(cmh(t, Cmh{0.7}).stop_round == want);
}

TEST_CASE("CMH stops no earlier for higher targets") {
  const auto t = flattening();
  std::size_t prev = 0;
  for (double target : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto d = cmh(t, Cmh{target});
    const std::size_t stop = d.stop_round.value_or(t.round_count());
    CHECK(stop >= prev);
    prev = stop;
  }
}

TEST_CASE("CMH warns when parameters exceed the population") {
  std::vector<std::string> seen;
  set_warning_sink([&](std::string_view m) { seen.emplace_back(m); });
  const auto t = build_trajectory(100, 60, 20, {1, 19, 20, 10, 0});
  (void)cmh(t, Cmh{0.1});
  set_warning_sink(nullptr);
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].find("clamped") != std::string::npos);
}

TEST_CASE("Quant and QuantCI") {
  auto t = flattening();
  for (std::size_t r = 0; r < t.round_count(); ++r)
    testing::set_probabilities(t, r, [&](DocId d) { return d < 300 ? 0.8 : 0.01 + 0.02 * (r < 3); });
  for (double target : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    std::optional<std::size_t> want;
    for (std::size_t r = 1; r < t.round_count() && !want; ++r)
      if (quant_oracle(t, r) >= target) want = r;
    const auto q = quant(t, target);
    CHECK(q.stop_round == want);
    const auto ci = quant_ci_rule(t, target);
    CHECK(ci.stop_round.value_or(t.round_count()) >= q.stop_round.value_or(t.round_count()));
  }
  CHECK(quant_ci_rule(t, 0.5, 0.0).stop_round == quant(t, 0.5).stop_round);
}

TEST_CASE("SampleRecall") {
  const auto t = build_trajectory(1000, 20, 100, {1, 19, 0, 0});
  CHECK_THROWS_AS(sample_recall(t, SampleRecall{0.7, 21, 1}), ParameterError);
  const auto all = sample_recall(t, SampleRecall{1.0, 20, 3});
  CHECK(all.stop_round == 1u);
  CHECK(all.sample_cost >= 20);
  CHECK(all.sample_cost <= 1000);
  CHECK(sample_recall(t, SampleRecall{1.0, 20, 3}) == all);

  // Only the seed is relevant: the sample must contain it.
  const auto single = build_trajectory(1000, 1, 100, {1, 0, 0});
  const auto d = sample_recall(single, SampleRecall{0.5, 1, 9});
  CHECK(d.stop_round == 0u);
  CHECK(d.sample_cost >= 1);
}

TEST_CASE("rule identity and validation") {
  CHECK(rule_id(BatchPos{20, 4}) == "BatchPos-20-4");
  CHECK(rule_id(BatchPos{20, 4, PatienceMode::fixed_delay}) == "BatchPos-20-4-delay");
  CHECK(rule_id(Rule2399{}) == "2399-Rule");
  CHECK(rule_id(Cmh{}) == "CMH-heuristic");
  CHECK(rule_id(QuantCi{}) == "QuantCI");
  CHECK(rule_id(Knee{}) == "Knee");
  CHECK(is_target_aware(Quant{}));
  CHECK(!is_target_aware(Knee{}));
  CHECK(std::get<Quant>(with_target(Quant{0.7}, 0.3)).target == 0.3);
  CHECK_THROWS_AS(check_rule(Quant{1.5}), ParameterError);
  CHECK_THROWS_AS(check_rule(MaxProb{1.0}), ParameterError);
  CHECK_THROWS_AS(check_rule(BatchPos{20, 0}), ParameterError);
  CHECK_THROWS_AS(check_rule(Cmh{0.7, 1.0}), ParameterError);
  CHECK(to_string(StopReason::threshold_met) == "threshold-met");
}

TEST_CASE("a rule bank agrees with one-off evaluation") {
  auto t = flattening();
  for (std::size_t r = 0; r < t.round_count(); ++r)
    testing::set_probabilities(t, r, [&](DocId d) { return d < 300 ? 0.7 : 0.02; });
  const std::vector<RuleConfig> rules{Knee{}, Budget{}, Rule2399{}, CorrCoef{}, MaxProb{}, BatchPos{20, 1},
                                      Cmh{0.7}, Quant{0.7}, QuantCi{0.7}};
  const auto bank = evaluate_rules(rules, t);
  REQUIRE(bank.size() == rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) CHECK(bank[i] == evaluate_rule(rules[i], RuleContext(t)));
}

TEST_CASE("SampleRecall median stop tracks the true crossing round") {
  SynthesisSpec spec;
  spec.doc_count = 3000;
  spec.vocabulary_size = 800;
  spec.prevalence = 0.025;
  spec.separation = 0.45;
  spec.seed = 21;
  const auto st = synthesize(spec);
  RunOptions o;
  o.batch_size = 100;
  const auto t = run(bm25_saturate(st.corpus), st.task, 5, o);
  const double R = static_cast<double>(t.relevant_total());
  for (double target : {0.1, 0.3, 0.5, 0.7}) {
    std::size_t truth = t.last_round();
    for (std::size_t r = 0; r < t.round_count(); ++r)
      if (t.cumulative_relevant[r] / R >= target) {
        truth = r;
        break;
      }
    std::vector<std::size_t> stops;
    for (std::uint64_t seed = 0; seed < 100; ++seed)
      stops.push_back(*sample_recall(t, SampleRecall{target, 20, seed}).stop_round);
    std::nth_element(stops.begin(), stops.begin() + 50, stops.end());
    const auto median = static_cast<long>(stops[50]);
    INFO("target " << target << " truth " << truth << " median " << median);
    CHECK(std::abs(median - static_cast<long>(truth)) <= 1);
  }
}
