#include <fstream>
#include <sstream>

#include "doctest.h"
#include "tarstop/error.hpp"
#include "tarstop/experiment.hpp"
#include "test_support.hpp"

using namespace tarstop;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  const auto text = slurp(p);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

ExperimentConfig tiny(const std::string& name) {
  auto c = load_config(testing::fixture("tiny.json"));
  c.output_dir = testing::scratch_dir(name);
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_config(R"({"seeds_per_category": 3, "targets": [0.5], "rules": [{"rule": "Knee"}]})");
  CHECK(c.seeds_per_category == 3);
  CHECK(c.targets == std::vector<double>{0.5});
  REQUIRE(c.rules.size() == 1);
  CHECK(rule_id(c.rules[0]) == "Knee");
  CHECK(std::get<SyntheticSource>(c.corpus).categories.size() == 9);
  // Defaults survive a round-trip through the normalized form.
  CHECK(config_to_json(parse_config(config_to_json(c))) == config_to_json(c));

  CHECK_THROWS_AS(parse_config(R"({"rules": []})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"targets": []})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"targets": [1.5]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"targets": [0.5, 0.5]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"batch_size": 0})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"rules": [{"rule": "Nope"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"rules": [{"rule": "Knee", "min_s": 1000, "extra": 2}]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"rules": [{"rule": "Knee"}, {"rule": "Knee"}]})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
}

TEST_CASE("rule JSON round-trip") {
  for (const auto& r : default_rules()) CHECK(rule_id(rule_from_json(rule_to_json(r))) == rule_id(r));
  const auto b = rule_from_json(R"({"rule": "BatchPos", "patience": 4, "mode": "fixed_delay"})");
  CHECK(rule_id(b) == "BatchPos-20-4-delay");
  CHECK(rule_id(rule_from_json(R"({"rule": "SampleRecall", "positives": 10})")) == "SampleRecall-10");
}

TEST_CASE("simulation fingerprint ignores rules, targets and output") {
  auto a = tiny("fp_a");
  auto b = a;
  b.targets = {0.5};
  b.rules = {Budget{}};
  b.output_dir = "elsewhere";
  CHECK(simulation_fingerprint(a) == simulation_fingerprint(b));
  b.batch_size = 50;
  CHECK(simulation_fingerprint(a) != simulation_fingerprint(b));
}

TEST_CASE("simulate, evaluate, report on a tiny synthetic grid") {
  const auto c = tiny("exp_full");
  const auto sim = simulate(c);
  CHECK(sim.runs == 2);
  CHECK(sim.computed == 2);
  std::size_t archives = 0;
  for (const auto& e : fs::directory_iterator(c.output_dir / "trajectories"))
    archives += e.path().extension() == ".jsonl";
  CHECK(archives == 2);
  CHECK(fs::exists(c.output_dir / "trajectories" / "index.json"));
  for (const auto& id : sim.run_ids) CHECK(verify_trajectory(c.output_dir / "trajectories" / (id + ".jsonl")).ok);

  const auto ev = evaluate(c);
  CHECK(ev.runs == 2);
  CHECK(ev.records == 2 * 3 * 5);
  const auto recs = read_cost_records(c.output_dir / "results" / "cost_records.csv");
  CHECK(recs.size() == 30);
  for (const auto& r : recs) {
    CHECK(r.total_cost == r.reviewed + r.penalty + r.extra_sample_cost);
    CHECK(r.optimal_cost > 0);
    CHECK(r.category == "tiny-easy");
  }
  CHECK(fs::exists(c.output_dir / "results" / "aggregate.json"));
  CHECK(fs::exists(c.output_dir / "results" / "cost_dynamics.csv"));

  const auto text = report(c.output_dir / "results", c.output_dir / "report");
  CHECK(text.find("QuantCI") != std::string::npos);
  // Header plus one row per rule.
  CHECK(line_count(c.output_dir / "report" / "mse_by_target.csv") == 4);
  CHECK(line_count(c.output_dir / "report" / "cost_ratio_by_target.csv") == 4);
  // Long form: one row per run, rule and target.
  CHECK(line_count(c.output_dir / "report" / "recall_at_stop.csv") == 1 + 30);
  CHECK(fs::exists(c.output_dir / "report" / "cost_dynamics.json"));
  CHECK(fs::exists(c.output_dir / "report" / "report.txt"));
}

TEST_CASE("resume is idempotent and output is deterministic") {
  const auto c = tiny("exp_resume");
  simulate(c);
  const auto index = slurp(c.output_dir / "trajectories" / "index.json");
  const auto again = simulate(c);
  CHECK(again.computed == 0);
  CHECK(again.reused == 2);
  CHECK(slurp(c.output_dir / "trajectories" / "index.json") == index);

  auto d = c;
  d.output_dir = testing::scratch_dir("exp_resume_fresh");
  simulate(d, SimulateOptions{2, false, false});
  for (const auto& e : fs::directory_iterator(c.output_dir / "trajectories"))
    CHECK(slurp(e.path()) == slurp(d.output_dir / "trajectories" / e.path().filename()));
  evaluate(c);
  evaluate(d, 2);
  CHECK(slurp(c.output_dir / "results" / "cost_records.csv") == slurp(d.output_dir / "results" / "cost_records.csv"));
}

TEST_CASE("corrupt archives are refused unless discarded") {
  const auto c = tiny("exp_corrupt");
  const auto sim = simulate(c);
  const auto victim = c.output_dir / "trajectories" / (sim.run_ids[0] + ".jsonl");
  auto text = slurp(victim);
  text.resize(text.size() / 2);
  std::ofstream(victim, std::ios::binary | std::ios::trunc) << text;
  CHECK_THROWS_AS(simulate(c), DataError);
  CHECK_THROWS_AS(evaluate(c), DataError);
  SimulateOptions o;
  o.discard_corrupt = true;
  const auto fixed = simulate(c, o);
  CHECK(fixed.computed == 1);
  CHECK(verify_trajectory(victim).ok);
}

TEST_CASE("evaluate refuses trajectories from a different simulation") {
  auto c = tiny("exp_stale");
  simulate(c);
  c.batch_size = 50;
  CHECK_THROWS_AS(evaluate(c), ConfigError);
}

TEST_CASE("evaluate_trajectory orders records by rule then target") {
  const auto t = testing::build_trajectory(2000, 100, 100, {1, 40, 30, 10, 5, 0, 0});
  const std::vector<RuleConfig> rules{Knee{}, BatchPos{}};
  const std::vector<double> targets{0.3, 0.7};
  const auto recs = evaluate_trajectory(t, rules, targets);
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].rule_id == "Knee");
  CHECK(recs[0].target == 0.3);
  CHECK(recs[1].target == 0.7);
  CHECK(recs[2].rule_id == "BatchPos-20-1");
  // Target-agnostic rules stop at the same round for every target.
  CHECK(recs[2].stop_round == recs[3].stop_round);
}

TEST_CASE("svmlight collections run through a manifest") {
  const auto dir = testing::scratch_dir("exp_file");
  SynthesisSpec spec;
  spec.id = "FILECAT";
  spec.doc_count = 600;
  spec.vocabulary_size = 200;
  spec.prevalence = 0.05;
  spec.separation = 0.8;
  spec.seed = 4;
  const auto st = synthesize(spec);
  const std::vector<CategoryTask> tasks{st.task};
  save_svmlight(dir / "c.svm", st.corpus, tasks);
  Manifest m;
  m.corpus_path = "c.svm";
  m.categories.push_back({"FILECAT", std::nullopt, DifficultyBin::easy, {11, 12}});
  write_manifest(dir / "manifest.json", m);
  std::ofstream(dir / "config.json") << R"({"corpus": {"type": "svmlight", "manifest": "manifest.json"},
    "batch_size": 100, "rules": [{"rule": "Quant"}], "targets": [0.5], "output_dir": "out"})";

  const auto c = load_config(dir / "config.json");
  CHECK(c.output_dir == dir / "out");
  const auto sim = simulate(c);
  CHECK(sim.runs == 2);
  evaluate(c);
  const auto recs = read_cost_records(dir / "out" / "results" / "cost_records.csv");
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].category == "FILECAT");
  CHECK(recs[0].difficulty_bin == "easy");
  CHECK(recs[0].prevalence_bin == "common");
  CHECK((recs[0].seed == 11 || recs[0].seed == 12));

  m.categories[0].id = "MISSING";
  write_manifest(dir / "manifest.json", m);
  CHECK_THROWS(simulate(load_config(dir / "config.json")));
}
