#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "tarstop/tarstop.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tarstop_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path fixture(const std::string& name) {
  const char* env = std::getenv("TARSTOP_FIXTURES");
  return fs::path(env ? env : "tests/fixtures") / name;
}

int warnings = 0;
void count_warning(const char*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(tarstop_status_name(TARSTOP_OK)) == "ok");
  CHECK(std::string(tarstop_version()) == "1.0.0");
  CHECK(tarstop_last_error() != nullptr);
}

TEST_CASE("kernels") {
  double p = 0.0;
  REQUIRE(tarstop_hypergeometric_cdf(10, 4, 3, 1, &p) == TARSTOP_OK);
  CHECK(p == doctest::Approx(2.0 / 3.0));
  CHECK(tarstop_hypergeometric_cdf(10, 11, 3, 1, &p) == TARSTOP_ERR_DOMAIN);
  CHECK(std::string(tarstop_last_error()).find("hypergeometric") != std::string::npos);

  const double rev[] = {0.9, 0.8}, unrev[] = {0.2, 0.1};
  tarstop_estimate e{};
  REQUIRE(tarstop_quant_estimate(rev, 2, unrev, 2, 2.0, &e) == TARSTOP_OK);
  CHECK(e.point == doctest::Approx(0.85));
  CHECK(e.variance_bound == doctest::Approx(0.25 / 4.0 + 1.7 * 1.7 * 0.5 / 16.0));
  CHECK(tarstop_quant_estimate(nullptr, 0, nullptr, 0, 2.0, &e) == TARSTOP_UNDEFINED);
  const double bad[] = {1.0};
  CHECK(tarstop_quant_estimate(bad, 1, unrev, 2, 2.0, &e) == TARSTOP_ERR_DOMAIN);

  const int64_t s[] = {0, 100, 300, 500}, r[] = {0, 90, 160, 210};
  tarstop_knee k{};
  REQUIRE(tarstop_knee_point(s, r, 4, 500, &k) == TARSTOP_OK);
  CHECK(k.knee == 100);
  CHECK(k.rho == doctest::Approx(0.9 * 400.0 / 121.0));

  const double x[] = {1, 2, 3, 4}, y[] = {1, 3, 2, 5}, flat[] = {1, 1, 1, 1};
  double c = 0.0;
  REQUIRE(tarstop_pearson(x, y, 4, &c) == TARSTOP_OK);
  CHECK(c == doctest::Approx(5.5 / std::sqrt(43.75)));
  CHECK(tarstop_pearson(x, flat, 4, &c) == TARSTOP_UNDEFINED);

  size_t n = 0;
  REQUIRE(tarstop_knee_schedule(200, 1000, 3001, nullptr, 0, &n) == TARSTOP_OK);
  CHECK(n == 9);
  std::vector<int64_t> sched(n);
  REQUIRE(tarstop_knee_schedule(200, 1000, 3001, sched.data(), sched.size(), &n) == TARSTOP_OK);
  CHECK(sched.front() == 1201);
  CHECK(sched.back() == 3001);
}

TEST_CASE("corpus, trajectory and scoring handles") {
  const auto dir = scratch("handles");
  tarstop_corpus* corpus = nullptr;
  REQUIRE(tarstop_corpus_synthesize("cat", 0.05, 0.9, 600, 200, 3, &corpus) == TARSTOP_OK);
  CHECK(tarstop_corpus_doc_count(corpus) == 600);
  REQUIRE(tarstop_corpus_task_count(corpus) == 1);
  CHECK(std::string(tarstop_corpus_task_id(corpus, 0)) == "cat");
  CHECK(tarstop_corpus_task_id(corpus, 1) == nullptr);
  CHECK(tarstop_corpus_task_relevant(corpus, 0) == 30);

  const auto svm = (dir / "c.svm").string();
  REQUIRE(tarstop_corpus_save_svmlight(corpus, svm.c_str()) == TARSTOP_OK);
  tarstop_corpus* loaded = nullptr;
  REQUIRE(tarstop_corpus_load_svmlight(svm.c_str(), 1, &loaded) == TARSTOP_OK);
  CHECK(tarstop_corpus_doc_count(loaded) == 600);
  tarstop_corpus_free(loaded);

  tarstop_trajectory* t = nullptr;
  CHECK(tarstop_simulate_run(corpus, "nope", 1, 50, 0, 1.2, &t) != TARSTOP_OK);
  REQUIRE(tarstop_simulate_run(corpus, "cat", 1, 50, 0, 1.2, &t) == TARSTOP_OK);
  const size_t rounds = tarstop_trajectory_round_count(t);
  CHECK(rounds == 13);
  size_t reviewed = 0, relevant = 0;
  REQUIRE(tarstop_trajectory_round(t, 0, &reviewed, &relevant) == TARSTOP_OK);
  CHECK(reviewed == 1);
  CHECK(relevant == 1);
  CHECK(tarstop_trajectory_round(t, rounds, &reviewed, &relevant) == TARSTOP_ERR_PARAMETER);

  const auto arc = (dir / "t.jsonl").string();
  REQUIRE(tarstop_trajectory_write(t, arc.c_str()) == TARSTOP_OK);
  CHECK(tarstop_trajectory_verify(arc.c_str()) == TARSTOP_OK);
  tarstop_trajectory* back = nullptr;
  REQUIRE(tarstop_trajectory_read(arc.c_str(), &back) == TARSTOP_OK);
  CHECK(tarstop_trajectory_round_count(back) == rounds);

  tarstop_cost a{}, b{};
  REQUIRE(tarstop_trajectory_score(t, R"({"rule":"Quant"})", 0.5, &a) == TARSTOP_OK);
  REQUIRE(tarstop_trajectory_score(t, R"({"rule":"QuantCI"})", 0.5, &b) == TARSTOP_OK);
  CHECK(b.stop_round >= a.stop_round);
  CHECK(a.total_cost == a.reviewed + a.penalty + a.extra_sample_cost);
  CHECK(tarstop_trajectory_score(t, R"({"rule":"Nope"})", 0.5, &a) == TARSTOP_ERR_CONFIG);
  CHECK(tarstop_trajectory_score(t, R"({"rule":"Quant"})", 1.5, &a) == TARSTOP_ERR_PARAMETER);

  tarstop_trajectory_free(back);
  tarstop_trajectory_free(t);
  tarstop_corpus_free(corpus);
  tarstop_corpus_free(nullptr);
  CHECK(tarstop_trajectory_verify((dir / "missing.jsonl").string().c_str()) != TARSTOP_OK);
}

TEST_CASE("warning handler receives library warnings") {
  tarstop_corpus* corpus = nullptr;
  REQUIRE(tarstop_corpus_synthesize("cat", 0.3, 0.9, 300, 100, 5, &corpus) == TARSTOP_OK);
  tarstop_trajectory* t = nullptr;
  REQUIRE(tarstop_simulate_run(corpus, "cat", 1, 50, 0, 1.2, &t) == TARSTOP_OK);
  tarstop_set_warning_handler(count_warning, &warnings);
  tarstop_cost c{};
  REQUIRE(tarstop_trajectory_score(t, R"({"rule":"CMH-heuristic"})", 0.1, &c) == TARSTOP_OK);
  tarstop_set_warning_handler(nullptr, nullptr);
  CHECK(warnings >= 1);
  tarstop_trajectory_free(t);
  tarstop_corpus_free(corpus);
}

TEST_CASE("experiment pipeline") {
  const auto dir = scratch("experiment");
  tarstop_experiment* e = nullptr;
  CHECK(tarstop_experiment_parse(R"({"rules": []})", nullptr, &e) == TARSTOP_ERR_CONFIG);
  CHECK(e == nullptr);
  REQUIRE(tarstop_experiment_load(fixture("tiny.json").string().c_str(), &e) == TARSTOP_OK);
  REQUIRE(tarstop_experiment_set_output_dir(e, dir.string().c_str()) == TARSTOP_OK);
  CHECK(std::string(tarstop_experiment_output_dir(e)) == dir.string());
  char* json = nullptr;
  REQUIRE(tarstop_experiment_config_json(e, &json) == TARSTOP_OK);
  CHECK(std::string(json).find("\"seeds_per_category\"") != std::string::npos);
  tarstop_string_free(json);

  tarstop_simulate_summary sum{};
  REQUIRE(tarstop_experiment_simulate(e, 1, 1, 0, &sum) == TARSTOP_OK);
  CHECK(sum.runs == 2);
  CHECK(sum.computed == 2);
  size_t records = 0;
  REQUIRE(tarstop_experiment_evaluate(e, 1, &records) == TARSTOP_OK);
  CHECK(records == 30);
  char* text = nullptr;
  REQUIRE(tarstop_report((dir / "results").string().c_str(), (dir / "report").string().c_str(), &text) ==
          TARSTOP_OK);
  CHECK(std::string(text).find("Knee") != std::string::npos);
  tarstop_string_free(text);
  CHECK(tarstop_report((dir / "nothing").string().c_str(), (dir / "r2").string().c_str(), nullptr) != TARSTOP_OK);
  tarstop_experiment_free(e);
}
