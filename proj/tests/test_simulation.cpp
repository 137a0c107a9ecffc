#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "tarstop/error.hpp"
#include "tarstop/simulation.hpp"
#include "test_support.hpp"

using namespace tarstop;

namespace {

struct Small {
  Corpus corpus;
  CategoryTask task;
};

const Small& small() {
  static const Small s = [] {
    SynthesisSpec spec;
    spec.doc_count = 600;
    spec.vocabulary_size = 200;
    spec.prevalence = 0.05;
    spec.separation = 0.8;
    spec.seed = 11;
    auto st = synthesize(spec);
    return Small{bm25_saturate(st.corpus), st.task};
  }();
  return s;
}

RunOptions opts(std::size_t batch = 50) {
  RunOptions o;
  o.batch_size = batch;
  return o;
}

}  // namespace

TEST_CASE("round 0 reviews one seed positive, later rounds full batches") {
  const auto t = run(small().corpus, small().task, 3, opts());
  REQUIRE(t.round_count() >= 2);
  CHECK(t.batches[0].docs.size() == 1);
  CHECK(t.batches[0].labels[0] == 1);
  CHECK(t.training_sizes[0] == 1);
  for (std::size_t k = 1; k + 1 < t.round_count(); ++k) CHECK(t.batches[k].docs.size() == 50);
  CHECK(t.snapshots.size() == t.round_count());
  CHECK(t.exhausted());
  CHECK(t.cumulative_relevant.back() == t.relevant_total());
  CHECK_NOTHROW(validate(t));

  std::set<DocId> seen;
  for (const auto& b : t.batches)
    for (DocId d : b.docs) CHECK(seen.insert(d).second);
  CHECK(seen.size() == small().corpus.doc_count());
}

TEST_CASE("runs are deterministic in the seed") {
  const auto a = run(small().corpus, small().task, 7, opts());
  const auto b = run(small().corpus, small().task, 7, opts());
  CHECK(format_trajectory(a) == format_trajectory(b));
  bool differs = false;
  for (std::uint64_t s = 8; s < 14 && !differs; ++s)
    differs = run(small().corpus, small().task, s, opts()).batches[0].docs != a.batches[0].docs;
  CHECK(differs);
}

TEST_CASE("max_rounds caps the feedback rounds") {
  auto o = opts();
  o.max_rounds = 3;
  const auto t = run(small().corpus, small().task, 3, o);
  CHECK(t.round_count() == 4);
  CHECK(t.training_sizes.back() == 151);
  CHECK(!t.exhausted());
}

TEST_CASE("artificial negatives only train the model before a true negative is reviewed") {
  // After round 0 only the seed is reviewed, so the model after round 0 was
  // fit with artificial negatives and gives every non-seed document a low score.
  const auto t = run(small().corpus, small().task, 3, opts());
  const auto& s0 = t.model_after(0);
  const DocId seed = t.batches[0].docs[0];
  for (DocId d = 0; d < t.doc_count; ++d)
    if (d != seed) CHECK(s0.scores[d] < s0.scores[seed]);
  // Without artificial negatives the seed-only training set has one class.
  auto o = opts();
  o.artificial_negatives = 0;
  CHECK_THROWS_AS(run(small().corpus, small().task, 3, o), DataError);
}

TEST_CASE("archive round-trip and checksum") {
  const auto dir = testing::scratch_dir("sim_archive");
  const auto t = run(small().corpus, small().task, 5, opts());
  write_trajectory(dir / "a.jsonl", t);
  const auto back = read_trajectory(dir / "a.jsonl");
  CHECK(format_trajectory(back) == format_trajectory(t));
  CHECK(back.run_id == t.run_id);
  CHECK(back.snapshots[3].scores == t.snapshots[3].scores);
  CHECK(verify_trajectory(dir / "a.jsonl").ok);

  // Flip one label inside a round line.
  std::string text = format_trajectory(t);
  const auto at = text.find("\"labels\":[1");
  REQUIRE(at != std::string::npos);
  text[at + 10] = '0';
  CHECK_THROWS_AS(parse_trajectory(text), DataError);

  // Drop the trailer, as an interrupted write would.
  std::string cut = format_trajectory(t);
  cut.erase(cut.rfind("{\"checksum\""));
  CHECK_THROWS_AS(parse_trajectory(cut), DataError);
  CHECK_THROWS_AS(read_trajectory(dir / "missing.jsonl"), Error);
}

TEST_CASE("verify replays the batch selection") {
  auto t = run(small().corpus, small().task, 5, opts());
  CHECK(verify_trajectory(t).ok);
  std::swap(t.snapshots[1].scores[t.batches[2].docs[0]], t.snapshots[1].scores[t.batches[5].docs[0]]);
  const auto v = verify_trajectory(t);
  CHECK(!v.ok);
  CHECK(v.message.find("round 2") != std::string::npos);

  auto fx = testing::build_trajectory(100, 10, 20, {1, 5, 4});
  CHECK(verify_trajectory(fx).ok);
  fx.cumulative_relevant[1] = 7;
  CHECK(!verify_trajectory(fx).ok);
}

TEST_CASE("gain curve") {
  const auto t = testing::build_trajectory(100, 10, 20, {1, 5, 4, 0});
  const auto g = gain_curve(t);
  REQUIRE(g.size() == 5);
  CHECK(g[0] == GainPoint{0, 0});
  CHECK(g[1] == GainPoint{1, 1});
  CHECK(g[2] == GainPoint{21, 6});
  CHECK(g[4] == GainPoint{61, 10});
  CHECK(gain_curve(t, 1).size() == 3);
}

TEST_CASE("separable task finds every positive soon after the model separates") {
  // Positives carry feature 0, negatives feature 1; both share feature 2.
  const std::size_t n = 1000, r = 120, batch = 50;
  std::vector<SparseVector> rows;
  std::vector<DocId> pos;
  for (DocId d = 0; d < n; ++d) {
    const bool p = d % (n / r) == 0 && pos.size() < r;
    if (p) pos.push_back(d);
    rows.emplace_back(std::vector<FeatureWeight>{{p ? 0u : 1u, 1.0}, {2, 1.0}});
  }
  const Corpus c(std::move(rows), 3);
  const auto task = make_task("sep", pos, n);
  RunOptions o = opts(batch);
  const auto t = run(c, task, 1, o);
  // First round whose model puts every unreviewed positive above every
  // unreviewed negative.
  std::size_t first = t.round_count();
  for (std::size_t k = 0; k < t.round_count() && first == t.round_count(); ++k) {
    const auto mask = t.reviewed_mask(k);
    double min_pos = 1e300, max_neg = -1e300;
    for (DocId d = 0; d < n; ++d) {
      if (mask[d]) continue;
      const double s = t.model_after(k).scores[d];
      if (std::binary_search(pos.begin(), pos.end(), d))
        min_pos = std::min(min_pos, s);
      else
        max_neg = std::max(max_neg, s);
    }
    if (min_pos > max_neg) first = k;
  }
  REQUIRE(first < t.round_count());
  const std::size_t limit = first + (r + batch - 1) / batch + 1;
  std::size_t reached = t.round_count();
  for (std::size_t k = 0; k < t.round_count(); ++k)
    if (t.cumulative_relevant[k] == r) {
      reached = k;
      break;
    }
  CHECK(reached <= limit);
}

TEST_CASE("run rejects bad input") {
  CHECK_THROWS_AS(run(small().corpus, small().task, 1, opts(0)), ParameterError);
  auto bad = small().task;
  bad.positives.push_back(static_cast<DocId>(small().corpus.doc_count() + 5));
  CHECK_THROWS_AS(run(small().corpus, bad, 1, opts()), DataError);
}
