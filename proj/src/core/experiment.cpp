#include "tarstop/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <exception>
#include <map>
#include <memory>
#include <set>
#include <thread>

#include "fileio.hpp"
#include "json.hpp"
#include "tarstop/error.hpp"
#include "tarstop/hash.hpp"

namespace tarstop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kIndexFormat = "tarstop-index";

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

// JSON object reader that rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  T get(const char* key, T fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    return as<T>(key);
  }

  template <class T>
  T require(const char* key) {
    used_.insert(key);
    if (!j_.contains(key)) throw ConfigError(fmt::format("{}: missing '{}'", where_, key));
    return as<T>(key);
  }

  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, k));
  }

 private:
  template <class T>
  T as(const char* key) const {
    const auto& v = j_.at(key);
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(fmt::format("{}: '{}' must be a string", where_, key));
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(fmt::format("{}: '{}' must be a non-negative integer", where_, key));
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(fmt::format("{}: '{}' must be a number", where_, key));
    }
    return v.get<T>();
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

PatienceMode parse_patience(const std::string& s) {
  if (s == "consecutive") return PatienceMode::consecutive;
  if (s == "fixed_delay") return PatienceMode::fixed_delay;
  throw ConfigError("BatchPos mode must be 'consecutive' or 'fixed_delay'");
}

RuleConfig rule_from(const json& j) {
  Fields f(j, "rule");
  const auto name = f.require<std::string>("rule");
  RuleConfig out;
  if (name == "FixedIterations") {
    out = FixedIterations{f.require<std::size_t>("rounds")};
  } else if (name == "2399-Rule") {
    out = Rule2399{f.get("x", 1.2)};
  } else if (name == "BatchPos") {
    BatchPos c;
    c.threshold = f.get("threshold", c.threshold);
    c.patience = f.get("patience", c.patience);
    c.mode = parse_patience(f.get<std::string>("mode", "consecutive"));
    out = c;
  } else if (name == "MaxProb") {
    out = MaxProb{f.get("cutoff", 0.1)};
  } else if (name == "CorrCoef") {
    out = CorrCoef{f.get("threshold", 0.99), f.get<std::size_t>("window", 3)};
  } else if (name == "Knee") {
    out = Knee{f.get<std::int64_t>("min_s", 1000)};
  } else if (name == "Budget") {
    out = Budget{};
  } else if (name == "CMH-heuristic") {
    Cmh c;
    c.alpha = f.get("alpha", c.alpha);
    const auto draws = f.get<std::string>("draws", "documents");
    if (draws != "documents" && draws != "rounds") throw ConfigError("CMH draws must be 'documents' or 'rounds'");
    c.draws = draws == "rounds" ? CmhDraws::rounds : CmhDraws::documents;
    const auto cmp = f.get<std::string>("comparison", "below_complement");
    if (cmp != "below_complement" && cmp != "at_least_alpha")
      throw ConfigError("CMH comparison must be 'below_complement' or 'at_least_alpha'");
    c.comparison = cmp == "at_least_alpha" ? CmhComparison::at_least_alpha : CmhComparison::below_complement;
    out = c;
  } else if (name == "Quant") {
    out = Quant{};
  } else if (name == "QuantCI") {
    QuantCi c;
    c.multiplier = f.get("multiplier", c.multiplier);
    out = c;
  } else if (name == "SampleRecall") {
    SampleRecall c;
    c.positives = f.get("positives", c.positives);
    c.seed = f.get<std::uint64_t>("seed", 0);
    out = c;
  } else {
    throw ConfigError(fmt::format("unknown rule '{}'", name));
  }
  f.finish();
  try {
    check_rule(out);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return out;
}

json rule_json(const RuleConfig& rule) {
  return std::visit(overloaded{
                        [](const FixedIterations& c) { return json{{"rule", "FixedIterations"}, {"rounds", c.rounds}}; },
                        [](const Rule2399& c) { return json{{"rule", "2399-Rule"}, {"x", c.x}}; },
                        [](const BatchPos& c) {
                          return json{{"rule", "BatchPos"},
                                      {"threshold", c.threshold},
                                      {"patience", c.patience},
                                      {"mode", c.mode == PatienceMode::consecutive ? "consecutive" : "fixed_delay"}};
                        },
                        [](const MaxProb& c) { return json{{"rule", "MaxProb"}, {"cutoff", c.cutoff}}; },
                        [](const CorrCoef& c) {
                          return json{{"rule", "CorrCoef"}, {"threshold", c.threshold}, {"window", c.window}};
                        },
                        [](const Knee& c) { return json{{"rule", "Knee"}, {"min_s", c.min_s}}; },
                        [](const Budget&) { return json{{"rule", "Budget"}}; },
                        [](const Cmh& c) {
                          return json{{"rule", "CMH-heuristic"},
                                      {"alpha", c.alpha},
                                      {"draws", c.draws == CmhDraws::documents ? "documents" : "rounds"},
                                      {"comparison", c.comparison == CmhComparison::below_complement
                                                         ? "below_complement"
                                                         : "at_least_alpha"}};
                        },
                        [](const Quant&) { return json{{"rule", "Quant"}}; },
                        [](const QuantCi& c) { return json{{"rule", "QuantCI"}, {"multiplier", c.multiplier}}; },
                        [](const SampleRecall& c) {
                          return json{{"rule", "SampleRecall"}, {"positives", c.positives}, {"seed", c.seed}};
                        },
                    },
                    rule);
}

json config_json(const ExperimentConfig& c, bool simulation_only) {
  json j;
  std::visit(overloaded{
                 [&](const SyntheticSource& s) {
                   json cats = json::array();
                   for (const auto& k : s.categories)
                     cats.push_back({{"id", k.id}, {"prevalence", k.prevalence}, {"separation", k.separation}});
                   j["corpus"] = {{"type", "synthetic"},
                                  {"doc_count", s.doc_count},
                                  {"vocabulary_size", s.vocabulary_size},
                                  {"categories", cats}};
                 },
                 [&](const FileSource& s) { j["corpus"] = {{"type", "svmlight"}, {"manifest", s.manifest.string()}}; },
             },
             c.corpus);
  j["seeds_per_category"] = c.seeds_per_category;
  j["batch_size"] = c.batch_size;
  j["max_rounds"] = c.max_rounds ? json(*c.max_rounds) : json(nullptr);
  j["artificial_negatives"] = c.artificial_negatives;
  j["model"] = {{"l2_weight", c.train.l2_weight},
                {"tolerance", c.train.tolerance},
                {"max_iterations", c.train.max_iterations}};
  j["k1"] = c.k1;
  j["bins"] = {{"rare_below", c.bins.rare_below},
               {"common_from", c.bins.common_from},
               {"hard_below", c.bins.hard_below},
               {"easy_above", c.bins.easy_above}};
  j["probe_train_fraction"] = c.probe_train_fraction;
  j["seed"] = c.seed;
  if (simulation_only) return j;
  json rules = json::array();
  for (const auto& r : c.rules) rules.push_back(rule_json(r));
  j["rules"] = rules;
  j["targets"] = c.targets;
  j["output_dir"] = c.output_dir.string();
  return j;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of
// the lowest failing index is rethrown, so failures are reported the same
// way regardless of scheduling.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct PreparedTask {
  std::shared_ptr<const Corpus> corpus;
  CategoryTask task;
  std::vector<std::uint64_t> seeds;
  std::uint64_t corpus_hash = 0;
};

std::uint64_t hash_corpus(const Corpus& corpus) {
  Fnv1a h;
  h.update(static_cast<std::uint64_t>(corpus.doc_count()));
  h.update(static_cast<std::uint64_t>(corpus.vocabulary_size()));
  for (const auto& doc : corpus.documents()) {
    h.update(static_cast<std::uint64_t>(doc.entries().size()));
    for (const auto& e : doc.entries()) {
      h.update(static_cast<std::uint64_t>(e.feature));
      h.update(std::bit_cast<std::uint64_t>(e.weight));
    }
  }
  return h.digest();
}

std::vector<std::uint64_t> derived_seeds(const ExperimentConfig& c, const std::string& id) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < c.seeds_per_category; ++i)
    seeds.push_back(derive_seed(c.seed, fmt::format("run:{}:{}", id, i)));
  return seeds;
}

void probe_if_needed(const ExperimentConfig& c, const Corpus& corpus, CategoryTask& task) {
  if (task.difficulty_bin) return;
  const double rp = difficulty_probe(corpus, task, c.probe_train_fraction, derive_seed(c.seed, "probe:" + task.id),
                                     c.train.l2_weight);
  task.difficulty_bin = c.bins.difficulty_bin(rp);
}

std::vector<PreparedTask> prepare(const ExperimentConfig& c) {
  std::vector<PreparedTask> out;
  if (const auto* s = std::get_if<SyntheticSource>(&c.corpus)) {
    for (const auto& cat : s->categories) {
      SynthesisSpec spec{cat.id, cat.prevalence, cat.separation, s->doc_count, s->vocabulary_size,
                         derive_seed(c.seed, "synth:" + cat.id)};
      auto gen = synthesize(spec, c.bins);
      auto corpus = std::make_shared<const Corpus>(bm25_saturate(gen.corpus, c.k1));
      probe_if_needed(c, *corpus, gen.task);
      out.push_back({corpus, std::move(gen.task), derived_seeds(c, cat.id), hash_corpus(*corpus)});
    }
  } else {
    const auto& src = std::get<FileSource>(c.corpus);
    const auto manifest = read_manifest(src.manifest);
    fs::path corpus_path = manifest.corpus_path;
    if (corpus_path.is_relative()) corpus_path = src.manifest.parent_path() / corpus_path;
    LoadOptions opts;
    opts.index_base = manifest.index_base;
    opts.downsample = manifest.downsample;
    opts.seed = manifest.seed;
    opts.bins = c.bins;
    auto loaded = load_svmlight(corpus_path, opts);
    auto corpus = std::make_shared<const Corpus>(bm25_saturate(loaded.corpus, c.k1));
    const auto corpus_hash = hash_corpus(*corpus);
    for (const auto& cat : manifest.categories) {
      auto it = std::find_if(loaded.tasks.begin(), loaded.tasks.end(), [&](const auto& t) { return t.id == cat.id; });
      if (it == loaded.tasks.end())
        throw DataError(fmt::format("category '{}' has no positives in {}", cat.id, corpus_path.string()));
      CategoryTask task = *it;
      if (cat.prevalence_bin) task.prevalence_bin = *cat.prevalence_bin;
      if (cat.difficulty_bin) task.difficulty_bin = *cat.difficulty_bin;
      probe_if_needed(c, *corpus, task);
      auto seeds = cat.seeds.empty() ? derived_seeds(c, cat.id) : cat.seeds;
      out.push_back({corpus, std::move(task), std::move(seeds), corpus_hash});
    }
  }
  return out;
}

std::string run_fingerprint(const ExperimentConfig& c, const PreparedTask& p, std::uint64_t seed) {
  Fnv1a h;
  h.update(p.corpus_hash);
  h.update(p.task.id);
  for (DocId d : p.task.positives) h.update(static_cast<std::uint64_t>(d));
  h.update(seed);
  h.update(static_cast<std::uint64_t>(c.batch_size));
  h.update(static_cast<std::uint64_t>(c.max_rounds.value_or(0)));
  h.update(static_cast<std::uint64_t>(c.artificial_negatives));
  h.update(std::bit_cast<std::uint64_t>(c.train.l2_weight));
  h.update(std::bit_cast<std::uint64_t>(c.train.tolerance));
  h.update(static_cast<std::uint64_t>(c.train.max_iterations));
  return h.hex();
}

fs::path trajectory_dir(const ExperimentConfig& c) { return c.output_dir / "trajectories"; }
fs::path results_dir(const ExperimentConfig& c) { return c.output_dir / "results"; }

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(fmt::format("cannot create {}: {}", p.string(), ec.message()));
}

struct DynamicsRow {
  double target;
  std::size_t round, reviewed, penalty;
  double recall;
  std::string stops;
};

struct TrajectoryResult {
  std::vector<CostRecord> records;
  std::vector<DynamicsRow> dynamics;
};

TrajectoryResult evaluate_one(const RunTrajectory& t, std::span<const RuleConfig> rules, std::span<const double> targets,
                              bool with_dynamics) {
  RuleContext ctx(t);
  PenaltyProfile profile(t);
  TrajectoryResult out;
  // stops[target index][round] -> rule ids stopping there
  std::vector<std::vector<std::vector<std::string>>> stops(targets.size(),
                                                           std::vector<std::vector<std::string>>(t.round_count()));
  for (const auto& rule : rules) {
    std::optional<StoppingDecision> shared;
    if (!is_target_aware(rule)) shared = evaluate_rule(rule, ctx);
    for (std::size_t k = 0; k < targets.size(); ++k) {
      StoppingDecision d;
      if (shared) {
        d = *shared;
      } else {
        auto r = with_target(rule, targets[k]);
        if (auto* s = std::get_if<SampleRecall>(&r)) s->seed = derive_seed(t.seed, s->seed);
        d = evaluate_rule(r, ctx);
      }
      out.records.push_back(score(profile, t, d, targets[k]));
      stops[k][out.records.back().stop_round].push_back(d.rule_id);
    }
  }
  if (with_dynamics) {
    for (std::size_t k = 0; k < targets.size(); ++k)
      for (std::size_t r = 0; r < t.round_count(); ++r) {
        std::string joined;
        for (const auto& id : stops[k][r]) joined += (joined.empty() ? "" : ";") + id;
        out.dynamics.push_back({targets[k], r, t.training_sizes[r], profile.penalty(r, targets[k]).documents,
                                recall_at(t, r), std::move(joined)});
      }
  }
  return out;
}

std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

template <class T>
T number(std::string_view text, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ParseError(line, fmt::format("bad number '{}'", text));
  return value;
}

std::vector<std::string> ordered_rules(std::span<const CostRecord> records) {
  std::vector<std::string> out;
  for (const auto& r : records)
    if (std::find(out.begin(), out.end(), r.rule_id) == out.end()) out.push_back(r.rule_id);
  return out;
}

std::vector<double> ordered_targets(std::span<const CostRecord> records) {
  std::set<double> s;
  for (const auto& r : records) s.insert(r.target);
  return {s.begin(), s.end()};
}

}  // namespace

std::vector<SyntheticCategory> default_synthetic_grid() {
  // Separations per prevalence so that the R-precision probe lands each
  // column in its difficulty band at 5,000 documents.
  struct Row {
    const char* name;
    double prevalence;
    double separation[3];
  };
  const Row rows[] = {{"rare", 0.01, {0.3, 0.55, 1.0}},
                      {"medium", 0.025, {0.25, 0.45, 0.9}},
                      {"common", 0.06, {0.15, 0.35, 0.8}}};
  const char* difficulty[] = {"hard", "medium", "easy"};
  std::vector<SyntheticCategory> out;
  for (const auto& r : rows)
    for (int d = 0; d < 3; ++d) out.push_back({fmt::format("{}-{}", r.name, difficulty[d]), r.prevalence, r.separation[d]});
  return out;
}

std::vector<RuleConfig> default_rules() {
  return {Knee{},   Budget{}, Rule2399{},      CorrCoef{}, MaxProb{}, BatchPos{20, 1}, BatchPos{20, 4},
          Cmh{},    Quant{},  QuantCi{}};
}

RuleConfig rule_from_json(std::string_view text) {
  try {
    return rule_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("rule: {}", e.what()));
  }
}

std::string rule_to_json(const RuleConfig& rule) { return rule_json(rule).dump(); }

void check_config(const ExperimentConfig& c) {
  if (c.rules.empty()) throw ConfigError("at least one rule is required");
  if (c.targets.empty()) throw ConfigError("at least one recall target is required");
  for (double t : c.targets)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError(fmt::format("recall target {} outside (0, 1]", t));
  std::set<double> distinct(c.targets.begin(), c.targets.end());
  if (distinct.size() != c.targets.size()) throw ConfigError("recall targets repeat");
  if (c.seeds_per_category < 1) throw ConfigError("seeds_per_category must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.max_rounds && *c.max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (!(c.train.l2_weight > 0.0)) throw ConfigError("model.l2_weight must be positive");
  if (!(c.train.tolerance > 0.0)) throw ConfigError("model.tolerance must be positive");
  if (c.train.max_iterations < 1) throw ConfigError("model.max_iterations must be >= 1");
  if (!(c.k1 > 0.0)) throw ConfigError("k1 must be positive");
  if (!(c.probe_train_fraction > 0.0 && c.probe_train_fraction < 1.0))
    throw ConfigError("probe_train_fraction must be in (0, 1)");
  if (!(c.bins.rare_below <= c.bins.common_from)) throw ConfigError("bins: rare_below exceeds common_from");
  if (!(c.bins.hard_below <= c.bins.easy_above)) throw ConfigError("bins: hard_below exceeds easy_above");
  std::set<std::string> ids;
  for (const auto& r : c.rules) {
    try {
      check_rule(with_target(r, c.targets.front()));
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    if (!ids.insert(rule_id(r)).second) throw ConfigError(fmt::format("rule '{}' listed twice", rule_id(r)));
  }
  if (const auto* s = std::get_if<SyntheticSource>(&c.corpus)) {
    if (s->categories.empty()) throw ConfigError("synthetic corpus needs at least one category");
    std::set<std::string> cats;
    for (const auto& k : s->categories) {
      if (k.id.empty() || k.id.find_first_of(",/\\ \t\n") != std::string::npos)
        throw ConfigError(fmt::format("category id '{}' must be non-empty without separators", k.id));
      if (!cats.insert(k.id).second) throw ConfigError(fmt::format("category '{}' listed twice", k.id));
      if (!(k.prevalence > 0.0 && k.prevalence < 1.0))
        throw ConfigError(fmt::format("category '{}': prevalence must be in (0, 1)", k.id));
      if (!(k.separation >= 0.0 && k.separation <= 1.0))
        throw ConfigError(fmt::format("category '{}': separation must be in [0, 1]", k.id));
      if (static_cast<std::size_t>(k.prevalence * static_cast<double>(s->doc_count)) < 1)
        throw ConfigError(fmt::format("category '{}' would have no positives", k.id));
    }
  }
}

ExperimentConfig parse_config(std::string_view text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  ExperimentConfig c;
  try {
    Fields f(j, "config");
    if (f.has("corpus")) {
      Fields cf(f.raw("corpus"), "corpus");
      const auto type = cf.require<std::string>("type");
      if (type == "synthetic") {
        SyntheticSource s;
        s.doc_count = cf.get("doc_count", s.doc_count);
        s.vocabulary_size = cf.get("vocabulary_size", s.vocabulary_size);
        if (cf.has("categories")) {
          const auto& arr = cf.raw("categories");
          if (!arr.is_array()) throw ConfigError("corpus.categories must be an array");
          for (const auto& cj : arr) {
            Fields kf(cj, "category");
            SyntheticCategory k;
            k.id = kf.require<std::string>("id");
            k.prevalence = kf.require<double>("prevalence");
            k.separation = kf.require<double>("separation");
            kf.finish();
            s.categories.push_back(std::move(k));
          }
        } else {
          s.categories = default_synthetic_grid();
        }
        c.corpus = std::move(s);
      } else if (type == "svmlight") {
        fs::path manifest = cf.require<std::string>("manifest");
        if (manifest.is_relative() && !base_dir.empty()) manifest = base_dir / manifest;
        c.corpus = FileSource{manifest};
      } else {
        throw ConfigError(fmt::format("corpus.type '{}' must be 'synthetic' or 'svmlight'", type));
      }
      cf.finish();
    }
    c.seeds_per_category = f.get("seeds_per_category", c.seeds_per_category);
    c.batch_size = f.get("batch_size", c.batch_size);
    if (f.has("max_rounds") && !f.raw("max_rounds").is_null()) c.max_rounds = f.require<std::size_t>("max_rounds");
    c.artificial_negatives = f.get("artificial_negatives", c.artificial_negatives);
    if (f.has("model")) {
      Fields mf(f.raw("model"), "model");
      c.train.l2_weight = mf.get("l2_weight", c.train.l2_weight);
      c.train.tolerance = mf.get("tolerance", c.train.tolerance);
      c.train.max_iterations = mf.get("max_iterations", c.train.max_iterations);
      mf.finish();
    }
    c.k1 = f.get("k1", c.k1);
    if (f.has("bins")) {
      Fields bf(f.raw("bins"), "bins");
      c.bins.rare_below = bf.get("rare_below", c.bins.rare_below);
      c.bins.common_from = bf.get("common_from", c.bins.common_from);
      c.bins.hard_below = bf.get("hard_below", c.bins.hard_below);
      c.bins.easy_above = bf.get("easy_above", c.bins.easy_above);
      bf.finish();
    }
    c.probe_train_fraction = f.get("probe_train_fraction", c.probe_train_fraction);
    if (f.has("rules")) {
      const auto& arr = f.raw("rules");
      if (!arr.is_array()) throw ConfigError("rules must be an array");
      c.rules.clear();
      for (const auto& r : arr) c.rules.push_back(rule_from(r));
    }
    if (f.has("targets")) {
      const auto& arr = f.raw("targets");
      if (!arr.is_array()) throw ConfigError("targets must be an array");
      c.targets.clear();
      for (const auto& t : arr) {
        if (!t.is_number()) throw ConfigError("targets must be numbers");
        c.targets.push_back(t.get<double>());
      }
    }
    fs::path out = f.get<std::string>("output_dir", c.output_dir.string());
    if (out.is_relative() && !base_dir.empty()) out = base_dir / out;
    c.output_dir = out;
    c.seed = f.get("seed", c.seed);
    f.finish();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  check_config(c);
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) { return config_json(c, false).dump(2) + "\n"; }

std::string simulation_fingerprint(const ExperimentConfig& c) {
  auto j = config_json(c, true);
  Fnv1a h;
  h.update(j.dump());
  return h.hex();
}

SimulateSummary simulate(const ExperimentConfig& c, const SimulateOptions& options) {
  check_config(c);
  const auto tasks = prepare(c);

  struct Job {
    std::size_t task = 0;
    std::uint64_t seed = 0;
    std::string fingerprint;
    std::string run_id;
    fs::path path;
    bool reuse = false;
    std::size_t rounds = 0;
  };
  std::vector<Job> jobs;
  std::set<std::string> ids;
  const auto dir = trajectory_dir(c);
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (auto seed : tasks[i].seeds) {
      Job j;
      j.task = i;
      j.seed = seed;
      j.fingerprint = run_fingerprint(c, tasks[i], seed);
      j.run_id = tasks[i].task.id + "__" + fmt::format("{:016x}", seed);
      if (!ids.insert(j.run_id).second) throw ConfigError(fmt::format("run '{}' is listed twice", j.run_id));
      j.path = dir / (j.run_id + ".jsonl");
      jobs.push_back(std::move(j));
    }
  make_dirs(dir);

  if (options.resume) {
    for (auto& j : jobs) {
      if (!fs::exists(j.path)) continue;
      std::string problem;
      try {
        const auto t = read_trajectory(j.path);
        if (t.fingerprint == j.fingerprint) {
          j.reuse = true;
          j.rounds = t.round_count();
          continue;
        }
        problem = "was produced with different settings";
      } catch (const Error& e) {
        problem = fmt::format("is unreadable ({})", e.what());
      }
      if (!options.discard_corrupt)
        throw DataError(fmt::format("archive {} {}; refusing to resume without discarding it", j.path.string(),
                                    problem));
    }
  }

  parallel_for(jobs.size(), options.workers, [&](std::size_t i) {
    auto& j = jobs[i];
    if (j.reuse) return;
    const auto& p = tasks[j.task];
    RunOptions ro;
    ro.batch_size = c.batch_size;
    ro.max_rounds = c.max_rounds;
    ro.artificial_negatives = c.artificial_negatives;
    ro.train = c.train;
    auto t = run(*p.corpus, p.task, j.seed, ro);
    t.fingerprint = j.fingerprint;
    j.rounds = t.round_count();
    write_trajectory(j.path, t);
  });

  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) { return a.run_id < b.run_id; });
  json index;
  index["format"] = kIndexFormat;
  index["version"] = 1;
  index["simulation_fingerprint"] = simulation_fingerprint(c);
  json runs = json::array();
  SimulateSummary summary;
  for (const auto& j : jobs) {
    runs.push_back({{"run_id", j.run_id},
                    {"file", j.path.filename().string()},
                    {"fingerprint", j.fingerprint},
                    {"category", tasks[j.task].task.id},
                    {"seed", j.seed},
                    {"rounds", j.rounds}});
    summary.run_ids.push_back(j.run_id);
    (j.reuse ? summary.reused : summary.computed)++;
  }
  index["runs"] = runs;
  detail::write_file(dir / "index.json", index.dump(2) + "\n");
  summary.runs = jobs.size();
  return summary;
}

std::vector<CostRecord> evaluate_trajectory(const RunTrajectory& t, std::span<const RuleConfig> rules,
                                            std::span<const double> targets) {
  return evaluate_one(t, rules, targets, false).records;
}

EvaluateSummary evaluate(const ExperimentConfig& c, std::size_t workers) {
  check_config(c);
  const auto dir = trajectory_dir(c);
  const auto index_path = dir / "index.json";
  if (!fs::exists(index_path))
    throw DataError(fmt::format("no trajectory index at {}; run simulate first", index_path.string()));
  json index;
  try {
    index = json::parse(detail::read_file(index_path));
    if (index.value("format", "") != kIndexFormat) throw DataError(index_path.string() + " is not a trajectory index");
    if (index.at("simulation_fingerprint").get<std::string>() != simulation_fingerprint(c))
      throw ConfigError("trajectory archive was produced by a different configuration; rerun simulate");
  } catch (const json::exception& e) {
    throw DataError(fmt::format("{}: {}", index_path.string(), e.what()));
  }
  struct Entry {
    std::string run_id, file, fingerprint;
  };
  std::vector<Entry> entries;
  for (const auto& r : index.at("runs"))
    entries.push_back({r.at("run_id").get<std::string>(), r.at("file").get<std::string>(),
                       r.at("fingerprint").get<std::string>()});

  std::vector<TrajectoryResult> results(entries.size());
  parallel_for(entries.size(), workers, [&](std::size_t i) {
    const auto path = dir / entries[i].file;
    if (!fs::exists(path))
      throw DataError(fmt::format("trajectory for run '{}' is missing ({})", entries[i].run_id, path.string()));
    const auto t = read_trajectory(path);
    if (t.run_id != entries[i].run_id || t.fingerprint != entries[i].fingerprint)
      throw DataError(fmt::format("trajectory {} does not match its index entry", path.string()));
    results[i] = evaluate_one(t, c.rules, c.targets, true);
  });

  std::vector<CostRecord> records;
  std::string dynamics = "run_id,target,round,reviewed,penalty,total_cost,recall,stops\n";
  for (std::size_t i = 0; i < entries.size(); ++i) {
    records.insert(records.end(), results[i].records.begin(), results[i].records.end());
    for (const auto& d : results[i].dynamics)
      dynamics += fmt::format("{},{},{},{},{},{},{},{}\n", entries[i].run_id, d.target, d.round, d.reviewed, d.penalty,
                              d.reviewed + d.penalty, d.recall, d.stops);
  }
  if (records.empty()) throw DataError("trajectory index lists no runs");
  const auto out = results_dir(c);
  make_dirs(out);
  write_cost_records(out / "cost_records.csv", records);
  detail::write_file(out / "aggregate.json", aggregate_to_json(aggregate(records)));
  detail::write_file(out / "cost_dynamics.csv", dynamics);
  return {entries.size(), records.size()};
}

std::string report(const fs::path& results, const fs::path& report_dir) {
  const auto records = read_cost_records(results / "cost_records.csv");
  if (records.empty()) throw DataError("no cost records in " + results.string());
  const auto agg = aggregate(records);
  const auto rules = ordered_rules(records);
  const auto targets = ordered_targets(records);
  make_dirs(report_dir);

  std::size_t width = 8;
  for (const auto& r : rules) width = std::max(width, r.size());

  // Recall MSE, rules x targets.
  std::string mse_csv = "rule";
  std::string text = "Recall MSE at stopping\n" + fmt::format("{:<{}}", "rule", width);
  for (double t : targets) {
    mse_csv += fmt::format(",{}", t);
    text += fmt::format(" {:>16}", fmt::format("target={}", t));
  }
  mse_csv += '\n';
  text += '\n';
  for (const auto& r : rules) {
    mse_csv += r;
    text += fmt::format("{:<{}}", r, width);
    for (double t : targets) {
      const auto* cell = agg.find(r, t);
      mse_csv += cell ? fmt::format(",{}", cell->mse_recall) : ",";
      text += cell ? fmt::format(" {:>16.3f}", cell->mse_recall) : fmt::format(" {:>16}", "-");
    }
    mse_csv += '\n';
    text += '\n';
  }

  // Cost ratio, mean (std).
  std::string ratio_csv = "rule";
  text += "\nCost ratio against the optimal cost, mean (std)\n" + fmt::format("{:<{}}", "rule", width);
  for (double t : targets) {
    ratio_csv += fmt::format(",{0}_mean,{0}_std", t);
    text += fmt::format(" {:>16}", fmt::format("target={}", t));
  }
  ratio_csv += '\n';
  text += '\n';
  for (const auto& r : rules) {
    ratio_csv += r;
    text += fmt::format("{:<{}}", r, width);
    for (double t : targets) {
      const auto* cell = agg.find(r, t);
      ratio_csv += cell ? fmt::format(",{},{}", cell->mean_cost_ratio, cell->std_cost_ratio) : ",,";
      text += cell ? fmt::format(" {:>16}", fmt::format("{:.2f} ({:.2f})", cell->mean_cost_ratio, cell->std_cost_ratio))
                   : fmt::format(" {:>16}", "-");
    }
    ratio_csv += '\n';
    text += '\n';
  }

  // Reliability, as a secondary reference.
  text += "\nReliability (fraction of runs reaching the target)\n" + fmt::format("{:<{}}", "rule", width);
  for (double t : targets) text += fmt::format(" {:>16}", fmt::format("target={}", t));
  text += '\n';
  for (const auto& r : rules) {
    text += fmt::format("{:<{}}", r, width);
    for (double t : targets) {
      const auto* cell = agg.find(r, t);
      text += cell ? fmt::format(" {:>16.2f}", cell->reliability) : fmt::format(" {:>16}", "-");
    }
    text += '\n';
  }

  // Recall at stop per bin x target, long form for box plots.
  auto sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const CostRecord& a, const CostRecord& b) {
    return std::tie(a.prevalence_bin, a.difficulty_bin, a.target) < std::tie(b.prevalence_bin, b.difficulty_bin, b.target);
  });
  std::string dist_csv = "prevalence_bin,difficulty_bin,target,rule,run_id,recall_at_stop\n";
  for (const auto& r : sorted)
    dist_csv += fmt::format("{},{},{},{},{},{}\n", r.prevalence_bin, r.difficulty_bin, r.target, r.rule_id, r.run_id,
                            r.recall_at_stop);

  // Cost dynamics per (run, target).
  json series = json::array();
  const auto dyn_path = results / "cost_dynamics.csv";
  if (fs::exists(dyn_path)) {
    const auto text_dyn = detail::read_file(dyn_path);
    std::map<std::pair<std::string, double>, json> by_run;
    std::vector<std::pair<std::string, double>> order;
    std::size_t line_no = 0;
    for (auto line : split_view(text_dyn, '\n')) {
      if (line_no++ == 0 || line.empty()) continue;
      const auto f = split_view(line, ',');
      if (f.size() != 8) throw ParseError(line_no, "cost dynamics row needs 8 fields");
      const std::pair<std::string, double> key{std::string(f[0]), number<double>(f[1], line_no)};
      auto [it, fresh] = by_run.try_emplace(key, json::object());
      if (fresh) {
        order.push_back(key);
        it->second = {{"run_id", key.first}, {"target", key.second}, {"reviewed", json::array()},
                      {"penalty", json::array()}, {"total_cost", json::array()}, {"recall", json::array()},
                      {"stops", json::object()}};
      }
      auto& s = it->second;
      const auto round = number<std::size_t>(f[2], line_no);
      s["reviewed"].push_back(number<std::size_t>(f[3], line_no));
      s["penalty"].push_back(number<std::size_t>(f[4], line_no));
      s["total_cost"].push_back(number<std::size_t>(f[5], line_no));
      s["recall"].push_back(number<double>(f[6], line_no));
      if (!f[7].empty())
        for (auto id : split_view(f[7], ';')) s["stops"][std::string(id)] = round;
    }
    for (const auto& k : order) series.push_back(std::move(by_run[k]));
  }

  detail::write_file(report_dir / "mse_by_target.csv", mse_csv);
  detail::write_file(report_dir / "cost_ratio_by_target.csv", ratio_csv);
  detail::write_file(report_dir / "recall_at_stop.csv", dist_csv);
  detail::write_file(report_dir / "cost_dynamics.json", series.dump(1) + "\n");
  detail::write_file(report_dir / "report.txt", text);
  return text;
}

}  // namespace tarstop
