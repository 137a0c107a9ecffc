#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tarstop {

using DocId = std::uint32_t;
using FeatureId = std::uint32_t;

struct FeatureWeight {
  FeatureId feature = 0;
  double weight = 0.0;
  bool operator==(const FeatureWeight&) const = default;
};

/// Sparse document vector. Feature ids are strictly increasing and every
/// weight is finite and non-negative.
class SparseVector {
 public:
  SparseVector() = default;
  explicit SparseVector(std::vector<FeatureWeight> entries);

  std::span<const FeatureWeight> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  double dot(std::span<const double> dense) const {
    double sum = 0.0;
    for (const auto& e : entries_) sum += e.weight * dense[e.feature];
    return sum;
  }

  bool operator==(const SparseVector&) const = default;

 private:
  std::vector<FeatureWeight> entries_;
};

/// Immutable document collection. doc_count() is the collection size C.
class Corpus {
 public:
  Corpus(std::vector<SparseVector> documents, std::size_t vocabulary_size);

  std::size_t doc_count() const { return documents_.size(); }
  std::size_t vocabulary_size() const { return vocabulary_size_; }
  const SparseVector& document(DocId id) const { return documents_[id]; }
  std::span<const SparseVector> documents() const { return documents_; }

  bool operator==(const Corpus&) const = default;

 private:
  std::vector<SparseVector> documents_;
  std::size_t vocabulary_size_;
};

enum class PrevalenceBin { rare, medium, common };
enum class DifficultyBin { hard, medium, easy };

std::string_view to_string(PrevalenceBin bin);
std::string_view to_string(DifficultyBin bin);
PrevalenceBin parse_prevalence_bin(std::string_view text);
DifficultyBin parse_difficulty_bin(std::string_view text);

/// Bin edges. Prevalence below `rare_below` is rare, at or above
/// `common_from` is common. Probe R-precision below `hard_below` is hard,
/// above `easy_above` is easy.
struct BinEdges {
  double rare_below = 0.015;
  double common_from = 0.04;
  double hard_below = 0.45;
  double easy_above = 0.70;

  PrevalenceBin prevalence_bin(double prevalence) const;
  DifficultyBin difficulty_bin(double r_precision) const;
};

/// One binary relevance task over a corpus. `positives` is sorted and
/// non-empty; its size is R.
struct CategoryTask {
  std::string id;
  std::vector<DocId> positives;
  double prevalence = 0.0;
  PrevalenceBin prevalence_bin = PrevalenceBin::medium;
  std::optional<DifficultyBin> difficulty_bin;

  std::size_t relevant_count() const { return positives.size(); }
  /// Dense 0/1 labels of length doc_count.
  std::vector<std::uint8_t> labels(std::size_t doc_count) const;
};

CategoryTask make_task(std::string id, std::vector<DocId> positives, std::size_t doc_count,
                       const BinEdges& edges = {});

struct LabeledCorpus {
  Corpus corpus;
  std::vector<CategoryTask> tasks;
};

struct LoadOptions {
  /// Feature id base used when the file has no header line.
  int index_base = 1;
  /// Fraction of documents kept by a seeded uniform sample; 1 keeps all.
  double downsample = 1.0;
  std::uint64_t seed = 0;
  BinEdges bins;
};

/// Reads `<labels> <fid>:<value> ...` lines. `labels` is a comma separated
/// category list or `-`. An optional first line
/// `# tarstop-svmlight index_base=<0|1> vocabulary_size=<n>` selects the
/// feature id base (default 1) and vocabulary size (default max id + 1).
/// Weights are kept as raw term frequencies.
LabeledCorpus load_svmlight(const std::filesystem::path& path, const LoadOptions& options = {});
LabeledCorpus parse_svmlight(std::string_view text, const LoadOptions& options = {});

void save_svmlight(const std::filesystem::path& path, const Corpus& corpus,
                   std::span<const CategoryTask> tasks, int index_base = 1);
std::string format_svmlight(const Corpus& corpus, std::span<const CategoryTask> tasks,
                            int index_base = 1);

/// Uniform sample without replacement of round(fraction * C) documents,
/// original order kept. Tasks left without positives are dropped.
LabeledCorpus downsample(const LabeledCorpus& input, double fraction, std::uint64_t seed,
                         const BinEdges& bins = {});

/// Replaces each weight tf by tf * (k1 + 1) / (tf + k1).
Corpus bm25_saturate(const Corpus& corpus, double k1 = 1.2);

struct SynthesisSpec {
  std::string id = "synthetic";
  double prevalence = 0.01;
  /// Separation of positives from negatives on the signal subspace, in
  /// [0, 1]. 0 makes the classes indistinguishable.
  double separation = 0.5;
  std::size_t doc_count = 5000;
  std::size_t vocabulary_size = 2000;
  std::uint64_t seed = 0;
};

struct SyntheticTask {
  Corpus corpus;
  CategoryTask task;
};

/// Generates raw term-frequency documents. Positive count is
/// floor(prevalence * doc_count). Deterministic given the spec.
SyntheticTask synthesize(const SynthesisSpec& spec, const BinEdges& bins = {});

/// Fraction of relevant documents among the top R' of `scores`, where R' is
/// the number of relevant labels. Ties rank by ascending index.
double r_precision(std::span<const double> scores, std::span<const std::uint8_t> labels);

/// Trains the logistic scorer on a random `train_fraction` split and returns
/// the R-precision of its ranking of the held-out documents.
double difficulty_probe(const Corpus& corpus, const CategoryTask& task, double train_fraction,
                        std::uint64_t seed, double l2_weight = 1.0);

struct ManifestCategory {
  std::string id;
  std::optional<PrevalenceBin> prevalence_bin;
  std::optional<DifficultyBin> difficulty_bin;
  std::vector<std::uint64_t> seeds;
};

/// Sidecar JSON describing a collection file and the categories to run.
struct Manifest {
  std::string corpus_path;
  int index_base = 1;
  double downsample = 1.0;
  std::uint64_t seed = 0;
  std::vector<ManifestCategory> categories;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace tarstop
