#include "tarstop/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "fileio.hpp"
#include "json.hpp"
#include "tarstop/error.hpp"

namespace tarstop {

namespace {

constexpr std::string_view kCsvHeader =
    "run_id,category,prevalence_bin,difficulty_bin,seed,rule,target,stop_round,reason,reviewed,penalty,"
    "extra_sample_cost,total_cost,recall_at_stop,optimal_cost,cost_ratio,min_total_cost,flagged";

void check_target(double target) {
  if (!(target > 0.0 && target <= 1.0)) throw ParameterError(fmt::format("recall target {} outside (0, 1]", target));
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, std::size_t line) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ParseError(line, fmt::format("bad number '{}'", text));
  return value;
}

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) throw DataError(fmt::format("field '{}' contains a separator", s));
}

struct Moments {
  std::size_t n = 0;
  double sq_err = 0.0, ratio_sum = 0.0, recall_sum = 0.0;
  std::size_t reliable = 0;
  std::vector<double> ratios;

  void add(const CostRecord& r) {
    ++n;
    const double e = r.recall_at_stop - r.target;
    sq_err += e * e;
    ratio_sum += r.cost_ratio;
    recall_sum += r.recall_at_stop;
    reliable += r.recall_at_stop >= r.target;
    ratios.push_back(r.cost_ratio);
  }

  AggregateCell cell(std::string rule, double target, std::string prev, std::string diff) const {
    AggregateCell c{std::move(rule), target, std::move(prev), std::move(diff)};
    const double dn = static_cast<double>(n);
    c.count = n;
    c.mse_recall = sq_err / dn;
    c.mean_cost_ratio = ratio_sum / dn;
    c.mean_recall = recall_sum / dn;
    c.reliability = static_cast<double>(reliable) / dn;
    if (n > 1) {
      double ss = 0.0;
      for (double r : ratios) ss += (r - c.mean_cost_ratio) * (r - c.mean_cost_ratio);
      c.std_cost_ratio = std::sqrt(ss / (dn - 1.0));
    }
    return c;
  }
};

}  // namespace

std::size_t required_relevant(std::size_t relevant_total, double target) {
  check_target(target);
  if (relevant_total == 0) throw DomainError("task has no relevant documents");
  const double r = static_cast<double>(relevant_total);
  auto k = static_cast<std::size_t>(std::ceil(target * r));
  // Settle rounding so that k/R >= target holds exactly as the recall check computes it.
  while (k > 0 && static_cast<double>(k - 1) / r >= target) --k;
  while (k < relevant_total && static_cast<double>(k) / r < target) ++k;
  return std::min(k, relevant_total);
}

double recall_at(const RunTrajectory& t, std::size_t round) {
  if (t.relevant_total() == 0) throw DomainError("task has no relevant documents");
  return static_cast<double>(t.cumulative_relevant.at(round)) / static_cast<double>(t.relevant_total());
}

PenaltyProfile::PenaltyProfile(const RunTrajectory& t) : trajectory_(t) {
  const auto labels = t.task.labels(t.doc_count);
  std::vector<std::uint8_t> reviewed(t.doc_count, 0);
  std::vector<DocId> candidates;
  positions_.resize(t.round_count());
  for (std::size_t r = 0; r < t.round_count(); ++r) {
    for (DocId d : t.batches[r].docs) reviewed[d] = 1;
    candidates.clear();
    for (DocId d = 0; d < t.doc_count; ++d)
      if (!reviewed[d]) candidates.push_back(d);
    const auto order = rank_by_scores(t.model_after(r).scores, candidates);
    auto& pos = positions_[r];
    for (std::size_t i = 0; i < order.size(); ++i)
      if (labels[order[i]]) pos.push_back(i + 1);
  }
}

Penalty PenaltyProfile::penalty(std::size_t round, double target) const {
  const auto need = required_relevant(trajectory_.relevant_total(), target);
  const auto found = trajectory_.cumulative_relevant.at(round);
  if (found >= need) return {};
  const auto& pos = positions_.at(round);
  const auto missing = need - found;
  if (missing > pos.size()) return {trajectory_.unreviewed_after(round), true};
  return {pos[missing - 1], false};
}

Penalty idealized_penalty(const RunTrajectory& t, std::size_t round, double target) {
  if (round >= t.round_count()) throw ParameterError(fmt::format("round {} has no snapshot", round));
  return PenaltyProfile(t).penalty(round, target);
}

OptimalCost optimal_cost(const PenaltyProfile& profile, const RunTrajectory& t, double target) {
  const auto need = required_relevant(t.relevant_total(), target);
  OptimalCost out;
  out.min_total = std::numeric_limits<std::size_t>::max();
  for (std::size_t r = 0; r < t.round_count(); ++r) {
    const auto p = profile.penalty(r, target);
    out.min_total = std::min(out.min_total, t.training_sizes[r] + p.documents);
    if (!out.reached && t.cumulative_relevant[r] >= need) {
      out.reached = true;
      out.round = r;
      out.cost = t.training_sizes[r];
    }
  }
  if (!out.reached) out.cost = t.training_sizes.back() + profile.penalty(t.last_round(), target).documents;
  return out;
}

OptimalCost optimal_cost(const RunTrajectory& t, double target) { return optimal_cost(PenaltyProfile(t), t, target); }

CostRecord score(const PenaltyProfile& profile, const RunTrajectory& t, const StoppingDecision& d, double target) {
  check_target(target);
  CostRecord c;
  c.run_id = t.run_id;
  c.category = t.task.id;
  c.prevalence_bin = std::string(to_string(t.task.prevalence_bin));
  c.difficulty_bin = t.task.difficulty_bin ? std::string(to_string(*t.task.difficulty_bin)) : "unbinned";
  c.seed = t.seed;
  c.rule_id = d.rule_id;
  c.target = target;
  c.stop_round = d.stop_round.value_or(t.last_round());
  if (c.stop_round >= t.round_count())
    throw DataError(fmt::format("decision for {} stops at round {} beyond the trajectory", d.rule_id, c.stop_round));
  c.reason = std::string(to_string(d.reason));
  c.reviewed = t.training_sizes[c.stop_round];
  const auto p = profile.penalty(c.stop_round, target);
  c.penalty = p.documents;
  c.extra_sample_cost = d.sample_cost;
  c.total_cost = c.reviewed + c.penalty + c.extra_sample_cost;
  c.recall_at_stop = recall_at(t, c.stop_round);
  const auto opt = optimal_cost(profile, t, target);
  c.optimal_cost = opt.cost;
  c.min_total_cost = opt.min_total;
  c.cost_ratio = static_cast<double>(c.total_cost) / static_cast<double>(c.optimal_cost);
  c.flagged = p.unreachable || !opt.reached;
  return c;
}

CostRecord score(const RunTrajectory& t, const StoppingDecision& d, double target) {
  return score(PenaltyProfile(t), t, d, target);
}

const AggregateCell* AggregateReport::find(std::string_view rule, double target) const {
  for (const auto& c : overall)
    if (c.rule_id == rule && c.target == target) return &c;
  return nullptr;
}

AggregateReport aggregate(std::span<const CostRecord> records) {
  if (records.empty()) throw ParameterError("no cost records to aggregate");
  std::map<std::tuple<std::string, double>, Moments> overall;
  std::map<std::tuple<std::string, double, std::string, std::string>, Moments> by_bin;
  for (const auto& r : records) {
    overall[{r.rule_id, r.target}].add(r);
    by_bin[{r.rule_id, r.target, r.prevalence_bin, r.difficulty_bin}].add(r);
  }
  AggregateReport out;
  for (const auto& [k, m] : overall) out.overall.push_back(m.cell(std::get<0>(k), std::get<1>(k), "all", "all"));
  for (const auto& [k, m] : by_bin)
    out.by_bin.push_back(m.cell(std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k)));
  return out;
}

std::string format_cost_records(std::span<const CostRecord> records) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    for (const auto* s : {&r.run_id, &r.category, &r.prevalence_bin, &r.difficulty_bin, &r.rule_id, &r.reason})
      check_field(*s);
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.run_id, r.category,
                       r.prevalence_bin, r.difficulty_bin, r.seed, r.rule_id, r.target, r.stop_round, r.reason,
                       r.reviewed, r.penalty, r.extra_sample_cost, r.total_cost, r.recall_at_stop, r.optimal_cost,
                       r.cost_ratio, r.min_total_cost, r.flagged ? 1 : 0);
  }
  return out;
}

std::vector<CostRecord> parse_cost_records(std::string_view csv) {
  std::vector<CostRecord> out;
  std::size_t line_no = 0;
  bool header = true;
  while (!csv.empty()) {
    const auto nl = csv.find('\n');
    auto line = csv.substr(0, nl);
    csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != kCsvHeader) throw ParseError(line_no, "unexpected cost record header");
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 18) throw ParseError(line_no, fmt::format("expected 18 fields, found {}", f.size()));
    CostRecord r;
    r.run_id = f[0];
    r.category = f[1];
    r.prevalence_bin = f[2];
    r.difficulty_bin = f[3];
    r.seed = parse_number<std::uint64_t>(f[4], line_no);
    r.rule_id = f[5];
    r.target = parse_number<double>(f[6], line_no);
    r.stop_round = parse_number<std::size_t>(f[7], line_no);
    r.reason = f[8];
    r.reviewed = parse_number<std::size_t>(f[9], line_no);
    r.penalty = parse_number<std::size_t>(f[10], line_no);
    r.extra_sample_cost = parse_number<std::size_t>(f[11], line_no);
    r.total_cost = parse_number<std::size_t>(f[12], line_no);
    r.recall_at_stop = parse_number<double>(f[13], line_no);
    r.optimal_cost = parse_number<std::size_t>(f[14], line_no);
    r.cost_ratio = parse_number<double>(f[15], line_no);
    r.min_total_cost = parse_number<std::size_t>(f[16], line_no);
    r.flagged = parse_number<int>(f[17], line_no) != 0;
    out.push_back(std::move(r));
  }
  if (header) throw DataError("cost record file is empty");
  return out;
}

void write_cost_records(const std::filesystem::path& path, std::span<const CostRecord> records) {
  detail::write_file(path, format_cost_records(records));
}

std::vector<CostRecord> read_cost_records(const std::filesystem::path& path) {
  return parse_cost_records(detail::read_file(path));
}

std::string aggregate_to_json(const AggregateReport& report) {
  auto cells = [](const std::vector<AggregateCell>& v, bool bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : v) {
      nlohmann::json j;
      j["rule"] = c.rule_id;
      j["target"] = c.target;
      if (bins) {
        j["prevalence_bin"] = c.prevalence_bin;
        j["difficulty_bin"] = c.difficulty_bin;
      }
      j["count"] = c.count;
      j["mse_recall"] = c.mse_recall;
      j["mean_cost_ratio"] = c.mean_cost_ratio;
      j["std_cost_ratio"] = c.std_cost_ratio;
      j["reliability"] = c.reliability;
      j["mean_recall"] = c.mean_recall;
      arr.push_back(std::move(j));
    }
    return arr;
  };
  nlohmann::json j;
  j["format"] = "tarstop-aggregate";
  j["version"] = 1;
  j["overall"] = cells(report.overall, false);
  j["by_bin"] = cells(report.by_bin, true);
  return j.dump(2) + "\n";
}

}  // namespace tarstop
