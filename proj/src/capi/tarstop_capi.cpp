#include "tarstop/tarstop.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "tarstop/error.hpp"
#include "tarstop/estimators.hpp"
#include "tarstop/evaluation.hpp"
#include "tarstop/experiment.hpp"
#include "tarstop/log.hpp"
#include "tarstop/simulation.hpp"
#include "tarstop/stopping.hpp"

struct tarstop_corpus {
  tarstop::LabeledCorpus data;
};

struct tarstop_trajectory {
  tarstop::RunTrajectory data;
};

struct tarstop_experiment {
  tarstop::ExperimentConfig config;
  std::string output_dir;
};

namespace {

thread_local std::string last_error;

tarstop_status fail(tarstop_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

tarstop_status from_kind(tarstop::ErrorKind kind) {
  switch (kind) {
    case tarstop::ErrorKind::config: return TARSTOP_ERR_CONFIG;
    case tarstop::ErrorKind::data: return TARSTOP_ERR_DATA;
    case tarstop::ErrorKind::parameter: return TARSTOP_ERR_PARAMETER;
    case tarstop::ErrorKind::domain: return TARSTOP_ERR_DOMAIN;
    case tarstop::ErrorKind::io: return TARSTOP_ERR_IO;
  }
  return TARSTOP_ERR_INTERNAL;
}

// Runs fn, translating exceptions into status codes. Nothing escapes.
template <class Fn>
tarstop_status guard(Fn&& fn) noexcept {
  try {
    last_error.clear();
    return fn();
  } catch (const tarstop::Error& e) {
    return fail(from_kind(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TARSTOP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TARSTOP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(TARSTOP_ERR_INTERNAL, "unknown error");
  }
}

#define REQUIRE(ptr)                                                            \
  do {                                                                          \
    if ((ptr) == nullptr) return fail(TARSTOP_ERR_PARAMETER, #ptr " is NULL");  \
  } while (0)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

tarstop_stop_reason reason_of(tarstop::StopReason r) {
  switch (r) {
    case tarstop::StopReason::threshold_met: return TARSTOP_STOP_THRESHOLD_MET;
    case tarstop::StopReason::exhausted: return TARSTOP_STOP_EXHAUSTED;
    case tarstop::StopReason::never: return TARSTOP_STOP_NEVER;
  }
  return TARSTOP_STOP_NEVER;
}

}  // namespace

extern "C" {

const char* tarstop_last_error(void) { return last_error.c_str(); }

const char* tarstop_status_name(tarstop_status status) {
  switch (status) {
    case TARSTOP_OK: return "ok";
    case TARSTOP_ERR_CONFIG: return "config error";
    case TARSTOP_ERR_DATA: return "data error";
    case TARSTOP_ERR_PARAMETER: return "parameter error";
    case TARSTOP_ERR_DOMAIN: return "domain error";
    case TARSTOP_ERR_IO: return "i/o error";
    case TARSTOP_UNDEFINED: return "undefined";
    case TARSTOP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* tarstop_version(void) { return "1.0.0"; }

void tarstop_set_warning_handler(tarstop_warning_fn fn, void* user) {
  if (fn == nullptr) {
    tarstop::set_warning_sink([](std::string_view m) {
      std::fprintf(stderr, "tarstop: warning: %.*s\n", static_cast<int>(m.size()), m.data());
    });
    return;
  }
  tarstop::set_warning_sink([fn, user](std::string_view m) { fn(std::string(m).c_str(), user); });
}

void tarstop_string_free(char* s) { std::free(s); }

tarstop_status tarstop_hypergeometric_cdf(int64_t population, int64_t successes, int64_t draws, int64_t k,
                                          double* out) {
  return guard([&] {
    REQUIRE(out);
    *out = tarstop::hypergeometric_cdf(population, successes, draws, k);
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_quant_estimate(const double* reviewed, size_t reviewed_count, const double* unreviewed,
                                      size_t unreviewed_count, double multiplier, tarstop_estimate* out) {
  return guard([&] {
    REQUIRE(out);
    if (reviewed_count > 0) REQUIRE(reviewed);
    if (unreviewed_count > 0) REQUIRE(unreviewed);
    const auto e = tarstop::quant_ci(std::span<const double>(reviewed, reviewed_count),
                                     std::span<const double>(unreviewed, unreviewed_count), multiplier);
    if (!e) return fail(TARSTOP_UNDEFINED, "recall estimate undefined: no probability mass");
    *out = {e->point, e->variance_bound, e->raw_lower, e->raw_upper, e->ci_lower, e->ci_upper, e->r_hat, e->u_hat};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_knee_point(const int64_t* reviewed, const int64_t* relevant, size_t count, int64_t s,
                                  tarstop_knee* out) {
  return guard([&] {
    REQUIRE(reviewed);
    REQUIRE(relevant);
    REQUIRE(out);
    std::vector<tarstop::GainPoint> points(count);
    for (size_t i = 0; i < count; ++i) points[i] = {reviewed[i], relevant[i]};
    const auto k = tarstop::knee_point(points, s);
    if (!k) return fail(TARSTOP_UNDEFINED, "no knee: nothing relevant found by s");
    *out = {k->knee, k->s, k->rho};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_pearson(const double* x, const double* y, size_t count, double* out) {
  return guard([&] {
    REQUIRE(x);
    REQUIRE(y);
    REQUIRE(out);
    const auto r = tarstop::pearson_corr(std::span<const double>(x, count), std::span<const double>(y, count));
    if (!r) return fail(TARSTOP_UNDEFINED, "correlation undefined: an input has zero variance");
    *out = *r;
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_knee_schedule(int64_t batch_size, int64_t min_s, int64_t limit, int64_t* out,
                                     size_t capacity, size_t* count) {
  return guard([&] {
    REQUIRE(count);
    if (capacity > 0) REQUIRE(out);
    const auto sched = tarstop::knee_schedule(batch_size, min_s, limit);
    *count = sched.size();
    for (size_t i = 0; i < sched.size() && i < capacity; ++i) out[i] = sched[i];
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_corpus_load_svmlight(const char* path, int index_base, tarstop_corpus** out) {
  return guard([&] {
    REQUIRE(path);
    REQUIRE(out);
    tarstop::LoadOptions opts;
    opts.index_base = index_base;
    *out = new tarstop_corpus{tarstop::load_svmlight(path, opts)};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_corpus_synthesize(const char* category_id, double prevalence, double separation,
                                         size_t doc_count, size_t vocabulary_size, uint64_t seed,
                                         tarstop_corpus** out) {
  return guard([&] {
    REQUIRE(category_id);
    REQUIRE(out);
    auto g = tarstop::synthesize({category_id, prevalence, separation, doc_count, vocabulary_size, seed});
    std::vector<tarstop::CategoryTask> tasks{std::move(g.task)};
    *out = new tarstop_corpus{tarstop::LabeledCorpus{std::move(g.corpus), std::move(tasks)}};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_corpus_save_svmlight(const tarstop_corpus* corpus, const char* path) {
  return guard([&] {
    REQUIRE(corpus);
    REQUIRE(path);
    tarstop::save_svmlight(path, corpus->data.corpus, corpus->data.tasks);
    return TARSTOP_OK;
  });
}

size_t tarstop_corpus_doc_count(const tarstop_corpus* corpus) { return corpus ? corpus->data.corpus.doc_count() : 0; }

size_t tarstop_corpus_task_count(const tarstop_corpus* corpus) { return corpus ? corpus->data.tasks.size() : 0; }

const char* tarstop_corpus_task_id(const tarstop_corpus* corpus, size_t index) {
  if (!corpus || index >= corpus->data.tasks.size()) return nullptr;
  return corpus->data.tasks[index].id.c_str();
}

size_t tarstop_corpus_task_relevant(const tarstop_corpus* corpus, size_t index) {
  if (!corpus || index >= corpus->data.tasks.size()) return 0;
  return corpus->data.tasks[index].relevant_count();
}

void tarstop_corpus_free(tarstop_corpus* corpus) { delete corpus; }

tarstop_status tarstop_simulate_run(const tarstop_corpus* corpus, const char* category_id, uint64_t seed,
                                    size_t batch_size, size_t max_rounds, double k1, tarstop_trajectory** out) {
  return guard([&] {
    REQUIRE(corpus);
    REQUIRE(category_id);
    REQUIRE(out);
    const auto& tasks = corpus->data.tasks;
    auto it = std::find_if(tasks.begin(), tasks.end(), [&](const auto& t) { return t.id == category_id; });
    if (it == tasks.end()) return fail(TARSTOP_ERR_PARAMETER, std::string("no category '") + category_id + "'");
    tarstop::RunOptions ro;
    ro.batch_size = batch_size;
    if (max_rounds > 0) ro.max_rounds = max_rounds;
    auto traj = k1 > 0.0 ? tarstop::run(tarstop::bm25_saturate(corpus->data.corpus, k1), *it, seed, ro)
                         : tarstop::run(corpus->data.corpus, *it, seed, ro);
    *out = new tarstop_trajectory{std::move(traj)};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_trajectory_read(const char* path, tarstop_trajectory** out) {
  return guard([&] {
    REQUIRE(path);
    REQUIRE(out);
    *out = new tarstop_trajectory{tarstop::read_trajectory(path)};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_trajectory_write(const tarstop_trajectory* trajectory, const char* path) {
  return guard([&] {
    REQUIRE(trajectory);
    REQUIRE(path);
    tarstop::write_trajectory(path, trajectory->data);
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_trajectory_verify(const char* path) {
  return guard([&] {
    REQUIRE(path);
    const auto r = tarstop::verify_trajectory(std::filesystem::path(path));
    if (!r.ok) return fail(TARSTOP_ERR_DATA, r.message);
    return TARSTOP_OK;
  });
}

size_t tarstop_trajectory_round_count(const tarstop_trajectory* trajectory) {
  return trajectory ? trajectory->data.round_count() : 0;
}

tarstop_status tarstop_trajectory_round(const tarstop_trajectory* trajectory, size_t round, size_t* reviewed,
                                        size_t* relevant) {
  return guard([&] {
    REQUIRE(trajectory);
    const auto& t = trajectory->data;
    if (round >= t.round_count()) return fail(TARSTOP_ERR_PARAMETER, "round out of range");
    if (reviewed) *reviewed = t.training_sizes[round];
    if (relevant) *relevant = t.cumulative_relevant[round];
    return TARSTOP_OK;
  });
}

void tarstop_trajectory_free(tarstop_trajectory* trajectory) { delete trajectory; }

tarstop_status tarstop_trajectory_score(const tarstop_trajectory* trajectory, const char* rule_json, double target,
                                        tarstop_cost* out) {
  return guard([&] {
    REQUIRE(trajectory);
    REQUIRE(rule_json);
    REQUIRE(out);
    const auto& t = trajectory->data;
    const auto rule = tarstop::with_target(tarstop::rule_from_json(rule_json), target);
    const auto d = tarstop::evaluate_rule(rule, tarstop::RuleContext(t));
    const auto c = tarstop::score(t, d, target);
    *out = {d.stop_round.has_value() ? 1 : 0,
            c.stop_round,
            reason_of(d.reason),
            c.reviewed,
            c.penalty,
            c.extra_sample_cost,
            c.total_cost,
            c.recall_at_stop,
            c.optimal_cost,
            c.cost_ratio,
            c.min_total_cost,
            c.flagged ? 1 : 0};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_experiment_load(const char* config_path, tarstop_experiment** out) {
  return guard([&] {
    REQUIRE(config_path);
    REQUIRE(out);
    auto c = tarstop::load_config(config_path);
    auto dir = c.output_dir.string();
    *out = new tarstop_experiment{std::move(c), std::move(dir)};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_experiment_parse(const char* config_json, const char* base_dir, tarstop_experiment** out) {
  return guard([&] {
    REQUIRE(config_json);
    REQUIRE(out);
    auto c = tarstop::parse_config(config_json, base_dir ? std::filesystem::path(base_dir) : std::filesystem::path());
    auto dir = c.output_dir.string();
    *out = new tarstop_experiment{std::move(c), std::move(dir)};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_experiment_set_output_dir(tarstop_experiment* experiment, const char* dir) {
  return guard([&] {
    REQUIRE(experiment);
    REQUIRE(dir);
    experiment->config.output_dir = dir;
    experiment->output_dir = dir;
    return TARSTOP_OK;
  });
}

const char* tarstop_experiment_output_dir(const tarstop_experiment* experiment) {
  return experiment ? experiment->output_dir.c_str() : nullptr;
}

tarstop_status tarstop_experiment_config_json(const tarstop_experiment* experiment, char** out) {
  return guard([&] {
    REQUIRE(experiment);
    REQUIRE(out);
    *out = dup_string(tarstop::config_to_json(experiment->config));
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_experiment_simulate(const tarstop_experiment* experiment, size_t workers, int resume,
                                           int discard_corrupt, tarstop_simulate_summary* out) {
  return guard([&] {
    REQUIRE(experiment);
    tarstop::SimulateOptions opts;
    opts.workers = workers;
    opts.resume = resume != 0;
    opts.discard_corrupt = discard_corrupt != 0;
    const auto s = tarstop::simulate(experiment->config, opts);
    if (out) *out = {s.runs, s.computed, s.reused};
    return TARSTOP_OK;
  });
}

tarstop_status tarstop_experiment_evaluate(const tarstop_experiment* experiment, size_t workers, size_t* records) {
  return guard([&] {
    REQUIRE(experiment);
    const auto s = tarstop::evaluate(experiment->config, workers);
    if (records) *records = s.records;
    return TARSTOP_OK;
  });
}

void tarstop_experiment_free(tarstop_experiment* experiment) { delete experiment; }

tarstop_status tarstop_report(const char* results_dir, const char* report_dir, char** text_out) {
  return guard([&] {
    REQUIRE(results_dir);
    REQUIRE(report_dir);
    const auto text = tarstop::report(results_dir, report_dir);
    if (text_out) *text_out = dup_string(text);
    return TARSTOP_OK;
  });
}

}  // extern "C"
