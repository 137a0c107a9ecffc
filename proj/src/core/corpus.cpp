#include "tarstop/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "json.hpp"
#include "fileio.hpp"
#include "tarstop/error.hpp"
#include "tarstop/linear_model.hpp"

namespace tarstop {

namespace {

using detail::read_file;
using detail::write_file;

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

bool valid_category_id(std::string_view id) {
  if (id.empty() || id == "-") return false;
  return id.find_first_of(",: \t#") == std::string_view::npos;
}

}  // namespace

SparseVector::SparseVector(std::vector<FeatureWeight> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (i > 0 && entries_[i].feature <= entries_[i - 1].feature)
      throw DataError("feature ids must be strictly increasing");
    if (!std::isfinite(entries_[i].weight) || entries_[i].weight < 0.0)
      throw DataError("feature weights must be finite and non-negative");
  }
}

Corpus::Corpus(std::vector<SparseVector> documents, std::size_t vocabulary_size)
    : documents_(std::move(documents)), vocabulary_size_(vocabulary_size) {
  if (documents_.empty()) throw DataError("empty corpus");
  if (vocabulary_size_ == 0) throw DataError("vocabulary size must be positive");
  for (const auto& doc : documents_) {
    if (!doc.empty() && doc.entries().back().feature >= vocabulary_size_)
      throw DataError(fmt::format("feature id {} outside vocabulary of size {}",
                                  doc.entries().back().feature, vocabulary_size_));
  }
}

std::string_view to_string(PrevalenceBin bin) {
  switch (bin) {
    case PrevalenceBin::rare: return "rare";
    case PrevalenceBin::medium: return "medium";
    case PrevalenceBin::common: return "common";
  }
  return "?";
}

std::string_view to_string(DifficultyBin bin) {
  switch (bin) {
    case DifficultyBin::hard: return "hard";
    case DifficultyBin::medium: return "medium";
    case DifficultyBin::easy: return "easy";
  }
  return "?";
}

PrevalenceBin parse_prevalence_bin(std::string_view text) {
  if (text == "rare") return PrevalenceBin::rare;
  if (text == "medium") return PrevalenceBin::medium;
  if (text == "common") return PrevalenceBin::common;
  throw ConfigError("unknown prevalence bin '" + std::string(text) + "'");
}

DifficultyBin parse_difficulty_bin(std::string_view text) {
  if (text == "hard") return DifficultyBin::hard;
  if (text == "medium") return DifficultyBin::medium;
  if (text == "easy") return DifficultyBin::easy;
  throw ConfigError("unknown difficulty bin '" + std::string(text) + "'");
}

PrevalenceBin BinEdges::prevalence_bin(double prevalence) const {
  if (prevalence < rare_below) return PrevalenceBin::rare;
  if (prevalence >= common_from) return PrevalenceBin::common;
  return PrevalenceBin::medium;
}

DifficultyBin BinEdges::difficulty_bin(double r_precision) const {
  if (r_precision < hard_below) return DifficultyBin::hard;
  if (r_precision > easy_above) return DifficultyBin::easy;
  return DifficultyBin::medium;
}

std::vector<std::uint8_t> CategoryTask::labels(std::size_t doc_count) const {
  std::vector<std::uint8_t> out(doc_count, 0);
  for (DocId d : positives) out.at(d) = 1;
  return out;
}

CategoryTask make_task(std::string id, std::vector<DocId> positives, std::size_t doc_count,
                       const BinEdges& edges) {
  if (positives.empty()) throw DataError("category '" + id + "' has no positive documents");
  std::sort(positives.begin(), positives.end());
  if (std::adjacent_find(positives.begin(), positives.end()) != positives.end())
    throw DataError("category '" + id + "' lists a document twice");
  if (positives.back() >= doc_count) throw DataError("category '" + id + "' positive out of range");
  CategoryTask task;
  task.id = std::move(id);
  task.prevalence = static_cast<double>(positives.size()) / static_cast<double>(doc_count);
  task.prevalence_bin = edges.prevalence_bin(task.prevalence);
  task.positives = std::move(positives);
  return task;
}

LabeledCorpus parse_svmlight(std::string_view text, const LoadOptions& options) {
  int index_base = options.index_base;
  std::optional<std::size_t> declared_vocab;
  std::vector<SparseVector> docs;
  std::vector<std::string> category_order;
  std::map<std::string, std::vector<DocId>, std::less<>> members;
  std::size_t max_feature_plus_one = 0;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;

    if (line_no == 1 && line.starts_with("# tarstop-svmlight")) {
      for (auto tok : split_whitespace(line.substr(18))) {
        auto eq = tok.find('=');
        if (eq == std::string_view::npos) throw ParseError(line_no, "bad header field");
        auto key = tok.substr(0, eq);
        auto val = tok.substr(eq + 1);
        std::size_t n = 0;
        if (!parse_number(val, n)) throw ParseError(line_no, "bad header value");
        if (key == "index_base") {
          if (n > 1) throw ParseError(line_no, "index_base must be 0 or 1");
          index_base = static_cast<int>(n);
        } else if (key == "vocabulary_size") {
          declared_vocab = n;
        } else {
          throw ParseError(line_no, "unknown header field '" + std::string(key) + "'");
        }
      }
      continue;
    }
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;

    const auto doc_id = static_cast<DocId>(docs.size());
    if (tokens[0] != "-") {
      std::string_view labels = tokens[0];
      std::size_t start = 0;
      while (start <= labels.size()) {
        std::size_t comma = labels.find(',', start);
        if (comma == std::string_view::npos) comma = labels.size();
        auto label = labels.substr(start, comma - start);
        if (!valid_category_id(label) || label.find(':') != std::string_view::npos)
          throw ParseError(line_no, "bad label list '" + std::string(labels) + "'");
        auto it = members.find(label);
        if (it == members.end()) {
          category_order.emplace_back(label);
          it = members.emplace(std::string(label), std::vector<DocId>{}).first;
        }
        if (it->second.empty() || it->second.back() != doc_id) it->second.push_back(doc_id);
        start = comma + 1;
      }
    }

    std::vector<FeatureWeight> entries;
    entries.reserve(tokens.size() - 1);
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos)
        throw ParseError(line_no, "expected <fid>:<value>, got '" + std::string(tokens[t]) + "'");
      long long fid = 0;
      double value = 0.0;
      if (!parse_number(tokens[t].substr(0, colon), fid) || fid < index_base)
        throw ParseError(line_no, "bad feature id '" + std::string(tokens[t]) + "'");
      if (!parse_number(tokens[t].substr(colon + 1), value) || !std::isfinite(value) || value < 0.0)
        throw ParseError(line_no, "bad feature value '" + std::string(tokens[t]) + "'");
      const auto feature = static_cast<FeatureId>(fid - index_base);
      if (!entries.empty() && feature <= entries.back().feature)
        throw ParseError(line_no, "feature ids must be strictly increasing");
      entries.push_back({feature, value});
    }
    if (!entries.empty())
      max_feature_plus_one = std::max<std::size_t>(max_feature_plus_one, entries.back().feature + 1u);
    docs.emplace_back(std::move(entries));
  }

  if (docs.empty()) throw DataError("empty corpus: no document lines");
  std::size_t vocab = declared_vocab.value_or(std::max<std::size_t>(max_feature_plus_one, 1));
  if (vocab < max_feature_plus_one)
    throw DataError(fmt::format("declared vocabulary_size {} is smaller than max feature id + 1 ({})",
                                vocab, max_feature_plus_one));

  LabeledCorpus out{Corpus(std::move(docs), vocab), {}};
  for (const auto& id : category_order) {
    out.tasks.push_back(make_task(id, members.find(id)->second, out.corpus.doc_count(), options.bins));
  }
  if (options.downsample < 1.0) return downsample(out, options.downsample, options.seed, options.bins);
  return out;
}

LabeledCorpus load_svmlight(const std::filesystem::path& path, const LoadOptions& options) {
  return parse_svmlight(read_file(path), options);
}

std::string format_svmlight(const Corpus& corpus, std::span<const CategoryTask> tasks, int index_base) {
  if (index_base != 0 && index_base != 1) throw ParameterError("index_base must be 0 or 1");
  std::vector<std::vector<std::size_t>> doc_labels(corpus.doc_count());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (!valid_category_id(tasks[t].id)) throw DataError("category id '" + tasks[t].id + "' cannot be written");
    for (DocId d : tasks[t].positives) doc_labels.at(d).push_back(t);
  }
  std::string out = fmt::format("# tarstop-svmlight index_base={} vocabulary_size={}\n", index_base,
                                corpus.vocabulary_size());
  for (std::size_t d = 0; d < corpus.doc_count(); ++d) {
    if (doc_labels[d].empty()) {
      out += '-';
    } else {
      for (std::size_t k = 0; k < doc_labels[d].size(); ++k) {
        if (k) out += ',';
        out += tasks[doc_labels[d][k]].id;
      }
    }
    for (const auto& e : corpus.document(static_cast<DocId>(d)).entries())
      out += fmt::format(" {}:{}", e.feature + static_cast<unsigned>(index_base), e.weight);
    out += '\n';
  }
  return out;
}

void save_svmlight(const std::filesystem::path& path, const Corpus& corpus,
                   std::span<const CategoryTask> tasks, int index_base) {
  write_file(path, format_svmlight(corpus, tasks, index_base));
}

LabeledCorpus downsample(const LabeledCorpus& input, double fraction, std::uint64_t seed,
                         const BinEdges& bins) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ParameterError("downsample fraction must be in (0, 1]");
  const std::size_t n = input.corpus.doc_count();
  auto keep_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  keep_count = std::clamp<std::size_t>(keep_count, 1, n);

  std::vector<DocId> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(keep_count);
  std::sort(order.begin(), order.end());

  std::vector<std::int64_t> remap(n, -1);
  std::vector<SparseVector> docs;
  docs.reserve(keep_count);
  for (std::size_t i = 0; i < order.size(); ++i) {
    remap[order[i]] = static_cast<std::int64_t>(i);
    docs.push_back(input.corpus.document(order[i]));
  }
  LabeledCorpus out{Corpus(std::move(docs), input.corpus.vocabulary_size()), {}};
  for (const auto& task : input.tasks) {
    std::vector<DocId> pos;
    for (DocId d : task.positives)
      if (remap[d] >= 0) pos.push_back(static_cast<DocId>(remap[d]));
    if (pos.empty()) continue;
    auto t = make_task(task.id, std::move(pos), keep_count, bins);
    t.difficulty_bin = task.difficulty_bin;
    out.tasks.push_back(std::move(t));
  }
  return out;
}

Corpus bm25_saturate(const Corpus& corpus, double k1) {
  if (!(k1 > 0.0) || !std::isfinite(k1)) throw ParameterError("k1 must be positive");
  std::vector<SparseVector> docs;
  docs.reserve(corpus.doc_count());
  for (const auto& doc : corpus.documents()) {
    std::vector<FeatureWeight> entries(doc.entries().begin(), doc.entries().end());
    for (auto& e : entries) e.weight = e.weight * (k1 + 1.0) / (e.weight + k1);
    docs.emplace_back(std::move(entries));
  }
  return Corpus(std::move(docs), corpus.vocabulary_size());
}

// Documents mix a Zipf background over the whole vocabulary with tokens drawn
// from a small signal subspace. Each positive gets its own signal strength so
// a task has both easy and hard positives; a slice of negatives carries weaker
// signal and acts as confusable non-relevant material.
SyntheticTask synthesize(const SynthesisSpec& spec, const BinEdges& bins) {
  if (!(spec.prevalence > 0.0 && spec.prevalence < 1.0))
    throw ParameterError("prevalence must be in (0, 1)");
  if (!(spec.separation >= 0.0 && spec.separation <= 1.0))
    throw ParameterError("separation must be in [0, 1]");
  if (spec.vocabulary_size < 20) throw ParameterError("vocabulary_size must be at least 20");
  const auto positives_count =
      static_cast<std::size_t>(std::floor(spec.prevalence * static_cast<double>(spec.doc_count)));
  if (positives_count < 1 || positives_count >= spec.doc_count)
    throw ParameterError(fmt::format("prevalence {} infeasible for {} documents", spec.prevalence,
                                     spec.doc_count));

  std::mt19937_64 rng(spec.seed);
  const std::size_t vocab = spec.vocabulary_size;

  std::vector<FeatureId> features(vocab);
  std::iota(features.begin(), features.end(), 0u);
  std::shuffle(features.begin(), features.end(), rng);
  const std::size_t signal_size = std::max<std::size_t>(8, vocab / 25);
  std::vector<FeatureId> signal(features.begin(), features.begin() + static_cast<long>(signal_size));

  std::shuffle(features.begin(), features.end(), rng);
  std::vector<double> zipf(vocab);
  for (std::size_t r = 0; r < vocab; ++r) zipf[r] = 1.0 / static_cast<double>(r + 1);
  std::discrete_distribution<std::size_t> background(zipf.begin(), zipf.end());

  std::vector<DocId> order(spec.doc_count);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<DocId> positives(order.begin(), order.begin() + static_cast<long>(positives_count));
  std::sort(positives.begin(), positives.end());
  std::vector<std::uint8_t> is_pos(spec.doc_count, 0);
  for (DocId d : positives) is_pos[d] = 1;

  constexpr double base_signal = 0.02;
  std::uniform_int_distribution<int> length_dist(20, 80);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> signal_pick(0, signal_size - 1);

  std::vector<SparseVector> docs;
  docs.reserve(spec.doc_count);
  std::map<FeatureId, double> counts;
  for (std::size_t d = 0; d < spec.doc_count; ++d) {
    double strength = base_signal;
    if (is_pos[d]) {
      strength += spec.separation * (0.1 + 0.5 * unit(rng));
    } else if (unit(rng) < 0.1) {
      strength += spec.separation * 0.1 * unit(rng);
    }
    const int length = length_dist(rng);
    counts.clear();
    for (int t = 0; t < length; ++t) {
      FeatureId f = unit(rng) < strength ? signal[signal_pick(rng)] : features[background(rng)];
      counts[f] += 1.0;
    }
    std::vector<FeatureWeight> entries;
    entries.reserve(counts.size());
    for (auto [f, c] : counts) entries.push_back({f, c});
    docs.emplace_back(std::move(entries));
  }

  SyntheticTask out{Corpus(std::move(docs), vocab), make_task(spec.id, std::move(positives), spec.doc_count, bins)};
  return out;
}

double r_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ParameterError("scores and labels differ in length");
  const auto relevant = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (relevant == 0) throw DataError("R-precision needs at least one relevant document");
  std::vector<DocId> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0u);
  auto ranked = rank_by_scores(scores, idx);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < relevant; ++r) hits += labels[ranked[r]];
  return static_cast<double>(hits) / static_cast<double>(relevant);
}

double difficulty_probe(const Corpus& corpus, const CategoryTask& task, double train_fraction,
                        std::uint64_t seed, double l2_weight) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ParameterError("train_fraction must be in (0, 1)");
  const std::size_t n = corpus.doc_count();
  const auto labels = task.labels(n);
  std::vector<DocId> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto train_count = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  train_count = std::clamp<std::size_t>(train_count, 1, n - 1);

  TrainingSet training;
  std::vector<DocId> train_docs(order.begin(), order.begin() + static_cast<long>(train_count));
  std::sort(train_docs.begin(), train_docs.end());
  for (DocId d : train_docs) training.add_reviewed(d, labels[d] != 0);
  if (!training.has_both_classes())
    throw DataError("degenerate split: training side of '" + task.id + "' has a single class");

  std::vector<DocId> holdout(order.begin() + static_cast<long>(train_count), order.end());
  std::sort(holdout.begin(), holdout.end());
  std::vector<std::uint8_t> holdout_labels;
  holdout_labels.reserve(holdout.size());
  for (DocId d : holdout) holdout_labels.push_back(labels[d]);
  if (std::count(holdout_labels.begin(), holdout_labels.end(), 1) == 0)
    throw DataError("degenerate split: holdout side of '" + task.id + "' has no positives");

  TrainOptions opts;
  opts.l2_weight = l2_weight;
  const auto model = train(corpus, training, opts).model;
  std::vector<double> scores;
  scores.reserve(holdout.size());
  for (DocId d : holdout) scores.push_back(model.score(corpus.document(d)));
  return r_precision(scores, holdout_labels);
}

Manifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
  try {
    if (j.value("format", "") != "tarstop-manifest") throw ConfigError("not a tarstop manifest");
    if (j.value("version", 0) != 1) throw ConfigError("unsupported manifest version");
    Manifest m;
    m.corpus_path = j.at("corpus").get<std::string>();
    m.index_base = j.value("index_base", 1);
    m.downsample = j.value("downsample", 1.0);
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.value("categories", nlohmann::json::array())) {
      ManifestCategory mc;
      mc.id = c.at("id").get<std::string>();
      if (c.contains("prevalence_bin"))
        mc.prevalence_bin = parse_prevalence_bin(c["prevalence_bin"].get<std::string>());
      if (c.contains("difficulty_bin"))
        mc.difficulty_bin = parse_difficulty_bin(c["difficulty_bin"].get<std::string>());
      mc.seeds = c.value("seeds", std::vector<std::uint64_t>{});
      m.categories.push_back(std::move(mc));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  nlohmann::json j;
  j["format"] = "tarstop-manifest";
  j["version"] = 1;
  j["corpus"] = manifest.corpus_path;
  j["index_base"] = manifest.index_base;
  j["downsample"] = manifest.downsample;
  j["seed"] = manifest.seed;
  j["categories"] = nlohmann::json::array();
  for (const auto& c : manifest.categories) {
    nlohmann::json jc;
    jc["id"] = c.id;
    if (c.prevalence_bin) jc["prevalence_bin"] = std::string(to_string(*c.prevalence_bin));
    if (c.difficulty_bin) jc["difficulty_bin"] = std::string(to_string(*c.difficulty_bin));
    jc["seeds"] = c.seeds;
    j["categories"].push_back(std::move(jc));
  }
  write_file(path, j.dump(2) + "\n");
}

}  // namespace tarstop
