// Command-line front end. Talks to the library only through the C API.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tarstop/tarstop.h"

namespace {

int exit_code(tarstop_status s) {
  switch (s) {
    case TARSTOP_OK:
    case TARSTOP_UNDEFINED: return 0;
    case TARSTOP_ERR_CONFIG:
    case TARSTOP_ERR_PARAMETER:
    case TARSTOP_ERR_DOMAIN: return 1;
    case TARSTOP_ERR_DATA:
    case TARSTOP_ERR_IO: return 2;
    case TARSTOP_ERR_INTERNAL: return 3;
  }
  return 3;
}

int report_failure(tarstop_status s) {
  std::fprintf(stderr, "tarstop: %s: %s\n", tarstop_status_name(s), tarstop_last_error());
  return exit_code(s);
}

struct Experiment {
  tarstop_experiment* handle = nullptr;
  ~Experiment() { tarstop_experiment_free(handle); }
};

tarstop_status open_experiment(const std::string& config, const std::string& output_dir, Experiment& e) {
  auto s = tarstop_experiment_load(config.c_str(), &e.handle);
  if (s == TARSTOP_OK && !output_dir.empty()) s = tarstop_experiment_set_output_dir(e.handle, output_dir.c_str());
  return s;
}

struct ExperimentFlags {
  std::string config;
  std::string output_dir;
  std::size_t workers = 1;
};

void add_experiment_flags(CLI::App* cmd, ExperimentFlags& f) {
  cmd->add_option("-c,--config", f.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--output-dir", f.output_dir, "override the config's output directory");
  cmd->add_option("-j,--workers", f.workers, "worker threads")->check(CLI::Range(1, 256));
}

int do_simulate(const ExperimentFlags& f, bool resume, bool discard) {
  Experiment e;
  auto s = open_experiment(f.config, f.output_dir, e);
  if (s != TARSTOP_OK) return report_failure(s);
  tarstop_simulate_summary sum{};
  s = tarstop_experiment_simulate(e.handle, f.workers, resume ? 1 : 0, discard ? 1 : 0, &sum);
  if (s != TARSTOP_OK) return report_failure(s);
  std::printf("simulate: %zu runs (%zu computed, %zu reused) in %s/trajectories\n", sum.runs, sum.computed,
              sum.reused, tarstop_experiment_output_dir(e.handle));
  return 0;
}

int do_evaluate(const ExperimentFlags& f) {
  Experiment e;
  auto s = open_experiment(f.config, f.output_dir, e);
  if (s != TARSTOP_OK) return report_failure(s);
  std::size_t records = 0;
  s = tarstop_experiment_evaluate(e.handle, f.workers, &records);
  if (s != TARSTOP_OK) return report_failure(s);
  std::printf("evaluate: %zu cost records in %s/results\n", records, tarstop_experiment_output_dir(e.handle));
  return 0;
}

int do_report(const std::string& results, const std::string& out, bool quiet) {
  char* text = nullptr;
  const auto s = tarstop_report(results.c_str(), out.c_str(), &text);
  if (s != TARSTOP_OK) return report_failure(s);
  if (!quiet) std::fputs(text, stdout);
  tarstop_string_free(text);
  return 0;
}

std::vector<double> as_doubles(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const auto& s : items) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw CLI::ValidationError("bad number '" + s + "'");
    out.push_back(v);
  }
  return out;
}

void print_double(const char* key, double v) { std::printf("%s=%.17g\n", key, v); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulate relevance-feedback review runs and score stopping rules."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tarstop_version()));

  ExperimentFlags sim_flags, eval_flags, run_flags;
  bool no_resume = false, discard = false;
  auto* sim = app.add_subcommand("simulate", "run the seed x category matrix and archive trajectories");
  add_experiment_flags(sim, sim_flags);
  sim->add_flag("--no-resume", no_resume, "recompute every run even when its archive is current");
  sim->add_flag("--discard-corrupt", discard, "replace unreadable or stale archives instead of refusing");

  auto* eval = app.add_subcommand("evaluate", "score every rule x target on the archived trajectories");
  add_experiment_flags(eval, eval_flags);

  std::string results_dir, report_dir;
  bool quiet = false;
  auto* rep = app.add_subcommand("report", "tables and plot data from evaluation results");
  rep->add_option("-r,--results", results_dir, "results directory written by evaluate")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep->add_option("-o,--out", report_dir, "report directory (default: <results>/../report)");
  rep->add_flag("-q,--quiet", quiet, "do not print the tables");

  bool run_no_resume = false, run_discard = false;
  auto* all = app.add_subcommand("run", "simulate, evaluate and report in one go");
  add_experiment_flags(all, run_flags);
  all->add_flag("--no-resume", run_no_resume, "recompute every run");
  all->add_flag("--discard-corrupt", run_discard, "replace unreadable or stale archives");

  std::vector<std::string> archives;
  auto* ver = app.add_subcommand("verify", "check trajectory archives (checksum, invariants, ranking replay)");
  ver->add_option("archives", archives, "trajectory .jsonl files")->required()->check(CLI::ExistingFile);

  std::string config_path;
  auto* cfg = app.add_subcommand("config", "print the normalized config (defaults when none is given)");
  cfg->add_option("-c,--config", config_path, "experiment config (JSON)")->check(CLI::ExistingFile);

  std::string syn_id = "synthetic", syn_out;
  double syn_prev = 0.025, syn_sep = 0.5;
  std::size_t syn_docs = 5000, syn_vocab = 2000;
  std::uint64_t syn_seed = 1;
  auto* syn = app.add_subcommand("synthesize", "write a synthetic labeled collection in svmlight format");
  syn->add_option("--id", syn_id, "category id");
  syn->add_option("--prevalence", syn_prev, "fraction of relevant documents");
  syn->add_option("--separation", syn_sep, "class separation in [0, 1]");
  syn->add_option("--docs", syn_docs, "document count");
  syn->add_option("--vocab", syn_vocab, "vocabulary size");
  syn->add_option("--seed", syn_seed, "rng seed");
  syn->add_option("-o,--out", syn_out, "output file")->required();

  auto* ker = app.add_subcommand("kernel", "evaluate one estimator kernel (debug oracle)");
  ker->require_subcommand(1);
  std::int64_t hg_n = 0, hg_k = 0, hg_draws = 0, hg_x = 0;
  auto* hg = ker->add_subcommand("hypergeom", "P(X <= k), X ~ Hypergeometric(N, K, n)");
  hg->add_option("--N", hg_n, "population")->required();
  hg->add_option("--K", hg_k, "successes in the population")->required();
  hg->add_option("--n", hg_draws, "draws")->required();
  hg->add_option("--k", hg_x, "observed successes")->required();

  std::vector<std::string> q_rev, q_unrev;
  double q_mult = 2.0;
  auto* quant = ker->add_subcommand("quant", "recall estimate and variance bound from probabilities");
  quant->add_option("--reviewed", q_rev, "probabilities of reviewed documents")->delimiter(',');
  quant->add_option("--unreviewed", q_unrev, "probabilities of unreviewed documents")->delimiter(',');
  quant->add_option("--multiplier", q_mult, "interval half-width in standard deviations");

  std::vector<std::string> k_points;
  std::int64_t k_s = -1;
  auto* knee = ker->add_subcommand("knee", "knee point and slope ratio of a gain curve");
  knee->add_option("--points", k_points, "s:Rel(s) pairs starting at 0:0")->delimiter(',')->required();
  knee->add_option("--s", k_s, "evaluate at this s (default: last point)");

  std::vector<std::string> p_x, p_y;
  auto* pear = ker->add_subcommand("pearson", "Pearson correlation");
  pear->add_option("--x", p_x)->delimiter(',')->required();
  pear->add_option("--y", p_y)->delimiter(',')->required();

  std::int64_t ks_batch = 200, ks_min = 1000, ks_limit = 5001;
  auto* sched = ker->add_subcommand("schedule", "training sizes where the knee test runs for fixed batches");
  sched->add_option("--batch", ks_batch, "batch size");
  sched->add_option("--min-s", ks_min, "smallest s tested");
  sched->add_option("--limit", ks_limit, "collection size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sim) return do_simulate(sim_flags, !no_resume, discard);
    if (*eval) return do_evaluate(eval_flags);
    if (*rep) {
      if (report_dir.empty()) report_dir = results_dir + "/../report";
      return do_report(results_dir, report_dir, quiet);
    }
    if (*all) {
      if (int rc = do_simulate(run_flags, !run_no_resume, run_discard)) return rc;
      if (int rc = do_evaluate(run_flags)) return rc;
      Experiment e;
      auto s = open_experiment(run_flags.config, run_flags.output_dir, e);
      if (s != TARSTOP_OK) return report_failure(s);
      const std::string out = tarstop_experiment_output_dir(e.handle);
      return do_report(out + "/results", out + "/report", false);
    }
    if (*ver) {
      int rc = 0;
      for (const auto& a : archives) {
        const auto s = tarstop_trajectory_verify(a.c_str());
        if (s == TARSTOP_OK) {
          std::printf("%s: ok\n", a.c_str());
        } else {
          std::printf("%s: FAILED: %s\n", a.c_str(), tarstop_last_error());
          rc = std::max(rc, exit_code(s));
        }
      }
      return rc;
    }
    if (*cfg) {
      Experiment e;
      tarstop_status s = config_path.empty() ? tarstop_experiment_parse("{}", nullptr, &e.handle)
                                             : tarstop_experiment_load(config_path.c_str(), &e.handle);
      if (s != TARSTOP_OK) return report_failure(s);
      char* text = nullptr;
      s = tarstop_experiment_config_json(e.handle, &text);
      if (s != TARSTOP_OK) return report_failure(s);
      std::fputs(text, stdout);
      tarstop_string_free(text);
      return 0;
    }
    if (*syn) {
      tarstop_corpus* c = nullptr;
      auto s = tarstop_corpus_synthesize(syn_id.c_str(), syn_prev, syn_sep, syn_docs, syn_vocab, syn_seed, &c);
      if (s == TARSTOP_OK) s = tarstop_corpus_save_svmlight(c, syn_out.c_str());
      const std::size_t relevant = tarstop_corpus_task_relevant(c, 0);
      tarstop_corpus_free(c);
      if (s != TARSTOP_OK) return report_failure(s);
      std::printf("wrote %zu documents (%zu relevant to '%s') to %s\n", syn_docs, relevant, syn_id.c_str(),
                  syn_out.c_str());
      return 0;
    }
    if (*hg) {
      double p = 0.0;
      const auto s = tarstop_hypergeometric_cdf(hg_n, hg_k, hg_draws, hg_x, &p);
      if (s != TARSTOP_OK) return report_failure(s);
      print_double("cdf", p);
      return 0;
    }
    if (*quant) {
      const auto r = as_doubles(q_rev), u = as_doubles(q_unrev);
      tarstop_estimate e{};
      const auto s = tarstop_quant_estimate(r.data(), r.size(), u.data(), u.size(), q_mult, &e);
      if (s == TARSTOP_UNDEFINED) {
        std::printf("recall=undefined\n");
        return 0;
      }
      if (s != TARSTOP_OK) return report_failure(s);
      print_double("r_hat", e.r_hat);
      print_double("u_hat", e.u_hat);
      print_double("recall", e.point);
      print_double("variance_bound", e.variance_bound);
      print_double("raw_lower", e.raw_lower);
      print_double("raw_upper", e.raw_upper);
      print_double("ci_lower", e.ci_lower);
      print_double("ci_upper", e.ci_upper);
      return 0;
    }
    if (*knee) {
      std::vector<std::int64_t> xs, ys;
      for (const auto& p : k_points) {
        const auto colon = p.find(':');
        if (colon == std::string::npos) throw CLI::ValidationError("point '" + p + "' is not s:rel");
        xs.push_back(std::stoll(p.substr(0, colon)));
        ys.push_back(std::stoll(p.substr(colon + 1)));
      }
      tarstop_knee k{};
      const auto s = tarstop_knee_point(xs.data(), ys.data(), xs.size(), k_s < 0 ? xs.back() : k_s, &k);
      if (s == TARSTOP_UNDEFINED) {
        std::printf("knee=undefined\n");
        return 0;
      }
      if (s != TARSTOP_OK) return report_failure(s);
      std::printf("knee=%lld\ns=%lld\n", static_cast<long long>(k.knee), static_cast<long long>(k.s));
      print_double("rho", k.rho);
      return 0;
    }
    if (*pear) {
      const auto x = as_doubles(p_x), y = as_doubles(p_y);
      double r = 0.0;
      const auto s = tarstop_pearson(x.data(), y.data(), x.size(), &r);
      if (s == TARSTOP_UNDEFINED) {
        std::printf("r=undefined\n");
        return 0;
      }
      if (s != TARSTOP_OK) return report_failure(s);
      print_double("r", r);
      return 0;
    }
    if (*sched) {
      std::size_t n = 0;
      auto s = tarstop_knee_schedule(ks_batch, ks_min, ks_limit, nullptr, 0, &n);
      std::vector<std::int64_t> out(n);
      if (s == TARSTOP_OK) s = tarstop_knee_schedule(ks_batch, ks_min, ks_limit, out.data(), out.size(), &n);
      if (s != TARSTOP_OK) return report_failure(s);
      for (auto v : out) std::printf("%lld\n", static_cast<long long>(v));
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "tarstop: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tarstop: bad argument: %s\n", e.what());
    return 1;
  }
  return 1;
}
