#include "tarstop/simulation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fileio.hpp"
#include "json.hpp"
#include "tarstop/error.hpp"
#include "tarstop/hash.hpp"

namespace tarstop {

std::vector<double> ScoreSnapshot::probabilities() const {
  std::vector<double> out(scores.size());
  std::transform(scores.begin(), scores.end(), out.begin(), sigmoid);
  return out;
}

std::vector<std::uint8_t> RunTrajectory::reviewed_mask(std::size_t round) const {
  std::vector<std::uint8_t> mask(doc_count, 0);
  for (std::size_t k = 0; k <= round && k < batches.size(); ++k)
    for (DocId d : batches[k].docs) mask[d] = 1;
  return mask;
}

void validate(const RunTrajectory& t) {
  const auto fail = [&](const std::string& what) { throw DataError("trajectory " + t.run_id + ": " + what); };
  if (t.batches.empty()) fail("no rounds");
  const std::size_t n = t.batches.size();
  if (t.training_sizes.size() != n || t.cumulative_relevant.size() != n || t.snapshots.size() != n)
    fail("per-round arrays differ in length");
  if (t.batch_size == 0) fail("batch size is zero");
  if (t.task.positives.empty()) fail("task has no positives");
  const auto labels = t.task.labels(t.doc_count);
  std::vector<std::uint8_t> seen(t.doc_count, 0);
  std::size_t s = 0, rel = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& b = t.batches[k];
    if (b.round != k) fail(fmt::format("round {} recorded as {}", k, b.round));
    if (b.docs.size() != b.labels.size()) fail("batch docs and labels differ in length");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < b.docs.size(); ++i) {
      const DocId d = b.docs[i];
      if (d >= t.doc_count) fail("document out of range");
      if (seen[d]) fail(fmt::format("document {} reviewed twice", d));
      seen[d] = 1;
      if (b.labels[i] != labels[d]) fail(fmt::format("label of document {} disagrees with task", d));
      pos += b.labels[i];
    }
    if (pos != b.positive_count) fail(fmt::format("round {} positive count mismatch", k));
    if (k == 0 && (b.docs.size() != 1 || pos != 1)) fail("round 0 must review exactly one positive");
    if (k > 0 && (b.docs.empty() || b.docs.size() > t.batch_size)) fail("batch size out of range");
    if (k > 0 && k + 1 < n && b.docs.size() != t.batch_size) fail("short batch before the final round");
    s += b.docs.size();
    rel += pos;
    if (t.training_sizes[k] != s) fail(fmt::format("training size at round {} should be {}", k, s));
    if (t.cumulative_relevant[k] != rel) fail(fmt::format("cumulative relevant at round {} should be {}", k, rel));
    if (t.snapshots[k].round != k + 1) fail("snapshot round labels out of order");
    if (t.snapshots[k].scores.size() != t.doc_count) fail("snapshot does not cover the collection");
  }
  if (rel > t.task.relevant_count()) fail("more relevant found than exist");
}

RunTrajectory run(const Corpus& corpus, const CategoryTask& task, std::uint64_t seed,
                  const RunOptions& options) {
  if (task.positives.empty()) throw DataError("task '" + task.id + "' has no positives");
  if (options.batch_size < 1) throw ParameterError("batch_size must be at least 1");
  const std::size_t n = corpus.doc_count();
  if (task.positives.back() >= n) throw DataError("task positives exceed corpus size");
  const std::size_t max_rounds =
      options.max_rounds.value_or((n + options.batch_size - 1) / options.batch_size);

  const auto labels = task.labels(n);
  std::mt19937_64 rng(seed);

  RunTrajectory traj;
  traj.task = task;
  traj.doc_count = n;
  traj.seed = seed;
  traj.batch_size = options.batch_size;

  std::vector<std::uint8_t> reviewed(n, 0);
  std::vector<DocId> review_order;
  std::size_t rel = 0;
  bool negative_seen = false;

  auto record = [&](std::vector<DocId> docs) {
    BatchRecord b;
    b.round = traj.batches.size();
    for (DocId d : docs) {
      reviewed[d] = 1;
      review_order.push_back(d);
      b.labels.push_back(labels[d]);
      b.positive_count += labels[d];
      negative_seen = negative_seen || labels[d] == 0;
    }
    b.docs = std::move(docs);
    rel += b.positive_count;
    traj.training_sizes.push_back(review_order.size());
    traj.cumulative_relevant.push_back(rel);
    traj.batches.push_back(std::move(b));
  };

  std::uniform_int_distribution<std::size_t> pick(0, task.positives.size() - 1);
  const DocId seed_doc = task.positives[pick(rng)];
  record({seed_doc});

  std::vector<DocId> pool;
  for (DocId d = 0; d < n; ++d)
    if (d != seed_doc) pool.push_back(d);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min(pool.size(), options.artificial_negatives));
  const std::vector<DocId> artificial = std::move(pool);

  auto fit = [&]() {
    TrainingSet training;
    for (DocId d : review_order) training.add_reviewed(d, labels[d] != 0);
    if (!negative_seen)
      for (DocId d : artificial)
        if (!reviewed[d]) training.add_artificial_negative(d);
    if (!training.has_both_classes())
      throw DataError("task '" + task.id + "': no negatives available to train on");
    return train(corpus, training, options.train).model;
  };

  std::vector<DocId> candidates;
  for (std::size_t round = 1;; ++round) {
    ScoreSnapshot snap;
    snap.round = round;
    snap.scores = score_all(fit(), corpus);
    traj.snapshots.push_back(std::move(snap));
    if (round > max_rounds || review_order.size() == n) break;

    candidates.clear();
    for (DocId d = 0; d < n; ++d)
      if (!reviewed[d]) candidates.push_back(d);
    const auto& scores = traj.snapshots.back().scores;
    const std::size_t take = std::min(options.batch_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(take), candidates.end(),
                      [&](DocId a, DocId b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return a < b;
                      });
    candidates.resize(take);
    record(candidates);
  }
  traj.run_id = task.id + "__" + fmt::format("{:016x}", seed);
  return traj;
}

std::vector<GainPoint> gain_curve(const RunTrajectory& t, std::size_t round) {
  if (t.batches.empty()) throw DataError("empty trajectory");
  std::vector<GainPoint> out{{0, 0}};
  for (std::size_t k = 0; k <= round && k < t.round_count(); ++k)
    out.push_back({static_cast<std::int64_t>(t.training_sizes[k]), static_cast<std::int64_t>(t.cumulative_relevant[k])});
  return out;
}

std::vector<GainPoint> gain_curve(const RunTrajectory& t) {
  return gain_curve(t, t.round_count() == 0 ? 0 : t.last_round());
}

namespace {

constexpr const char* kFormat = "tarstop-trajectory";
constexpr int kVersion = 1;

nlohmann::json task_to_json(const CategoryTask& task) {
  nlohmann::json j;
  j["id"] = task.id;
  j["positives"] = task.positives;
  j["prevalence_bin"] = std::string(to_string(task.prevalence_bin));
  j["difficulty_bin"] = task.difficulty_bin ? nlohmann::json(std::string(to_string(*task.difficulty_bin)))
                                            : nlohmann::json(nullptr);
  return j;
}

CategoryTask task_from_json(const nlohmann::json& j, std::size_t doc_count) {
  CategoryTask t = make_task(j.at("id").get<std::string>(), j.at("positives").get<std::vector<DocId>>(), doc_count);
  t.prevalence_bin = parse_prevalence_bin(j.at("prevalence_bin").get<std::string>());
  if (!j.at("difficulty_bin").is_null())
    t.difficulty_bin = parse_difficulty_bin(j.at("difficulty_bin").get<std::string>());
  return t;
}

}  // namespace

std::string format_trajectory(const RunTrajectory& t) {
  std::string out;
  Fnv1a sum;
  auto emit = [&](const nlohmann::json& j) {
    std::string line = j.dump() + "\n";
    sum.update(line);
    out += line;
  };
  nlohmann::json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["run_id"] = t.run_id;
  header["fingerprint"] = t.fingerprint;
  header["seed"] = t.seed;
  header["batch_size"] = t.batch_size;
  header["doc_count"] = t.doc_count;
  header["task"] = task_to_json(t.task);
  emit(header);
  for (std::size_t k = 0; k < t.round_count(); ++k) {
    nlohmann::json line;
    line["round"] = k;
    line["docs"] = t.batches[k].docs;
    line["labels"] = t.batches[k].labels;
    line["training_size"] = t.training_sizes[k];
    line["cumulative_relevant"] = t.cumulative_relevant[k];
    line["snapshot_round"] = t.snapshots[k].round;
    line["scores"] = t.snapshots[k].scores;
    emit(line);
  }
  nlohmann::json trailer;
  trailer["end"] = true;
  trailer["rounds"] = t.round_count();
  trailer["checksum"] = sum.hex();
  out += trailer.dump() + "\n";
  return out;
}

void write_trajectory(const std::filesystem::path& path, const RunTrajectory& t) {
  detail::write_file(path, format_trajectory(t));
}

RunTrajectory parse_trajectory(std::string_view text) {
  RunTrajectory t;
  Fnv1a sum;
  std::size_t pos = 0, line_no = 0;
  bool ended = false;
  try {
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) throw ParseError(line_no + 1, "truncated line");
      std::string_view line = text.substr(pos, eol + 1 - pos);
      pos = eol + 1;
      ++line_no;
      if (ended) throw ParseError(line_no, "data after trailer");
      auto j = nlohmann::json::parse(line);
      if (line_no == 1) {
        if (j.value("format", "") != kFormat) throw ParseError(1, "not a trajectory archive");
        if (j.value("version", 0) != kVersion) throw ParseError(1, "unsupported trajectory version");
        t.run_id = j.at("run_id").get<std::string>();
        t.fingerprint = j.at("fingerprint").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.batch_size = j.at("batch_size").get<std::size_t>();
        t.doc_count = j.at("doc_count").get<std::size_t>();
        t.task = task_from_json(j.at("task"), t.doc_count);
        sum.update(line);
        continue;
      }
      if (j.contains("end")) {
        if (j.at("checksum").get<std::string>() != sum.hex()) throw ParseError(line_no, "checksum mismatch");
        if (j.at("rounds").get<std::size_t>() != t.batches.size()) throw ParseError(line_no, "round count mismatch");
        ended = true;
        continue;
      }
      sum.update(line);
      BatchRecord b;
      b.round = j.at("round").get<std::size_t>();
      b.docs = j.at("docs").get<std::vector<DocId>>();
      b.labels = j.at("labels").get<std::vector<std::uint8_t>>();
      b.positive_count = static_cast<std::size_t>(std::count(b.labels.begin(), b.labels.end(), 1));
      t.batches.push_back(std::move(b));
      t.training_sizes.push_back(j.at("training_size").get<std::size_t>());
      t.cumulative_relevant.push_back(j.at("cumulative_relevant").get<std::size_t>());
      ScoreSnapshot snap;
      snap.round = j.at("snapshot_round").get<std::size_t>();
      snap.scores = j.at("scores").get<std::vector<double>>();
      t.snapshots.push_back(std::move(snap));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  }
  if (!ended) throw DataError("trajectory archive has no trailer (incomplete write?)");
  validate(t);
  return t;
}

RunTrajectory read_trajectory(const std::filesystem::path& path) {
  try {
    return parse_trajectory(detail::read_file(path));
  } catch (const ParseError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

VerifyResult verify_trajectory(const RunTrajectory& t) {
  try {
    validate(t);
  } catch (const Error& e) {
    return {false, e.what()};
  }
  std::vector<std::uint8_t> reviewed(t.doc_count, 0);
  for (DocId d : t.batches[0].docs) reviewed[d] = 1;
  std::vector<DocId> candidates;
  for (std::size_t k = 1; k < t.round_count(); ++k) {
    candidates.clear();
    for (DocId d = 0; d < t.doc_count; ++d)
      if (!reviewed[d]) candidates.push_back(d);
    auto ranked = rank_by_scores(t.model_after(k - 1).scores, candidates);
    const auto& batch = t.batches[k].docs;
    if (!std::equal(batch.begin(), batch.end(), ranked.begin()))
      return {false, fmt::format("round {} batch is not the top of its snapshot ranking", k)};
    for (DocId d : batch) reviewed[d] = 1;
  }
  return {true, fmt::format("{} rounds, {} reviewed, {} relevant", t.round_count(), t.training_sizes.back(),
                            t.cumulative_relevant.back())};
}

VerifyResult verify_trajectory(const std::filesystem::path& path) {
  try {
    return verify_trajectory(read_trajectory(path));
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

}  // namespace tarstop
