#include "tarstop/estimators.hpp"

#include <fmt/format.h>
#include <math.h>

#include <algorithm>
#include <cmath>

#include "tarstop/error.hpp"

namespace tarstop {

namespace {

void accumulate(std::span<const double> probs, double& sum, double& var, const char* which) {
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError(fmt::format("{} probability {} outside (0, 1)", which, p));
    sum += p;
    var += p * (1.0 - p);
  }
}

// Reentrant lgamma; std::lgamma writes the global signgam.
double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

double log_choose(std::int64_t n, std::int64_t k) {
  return log_gamma(static_cast<double>(n) + 1.0) - log_gamma(static_cast<double>(k) + 1.0) -
         log_gamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace

QuantSums quant_sums(std::span<const double> reviewed, std::span<const double> unreviewed) {
  QuantSums s;
  accumulate(reviewed, s.r_hat, s.var_r, "reviewed");
  accumulate(unreviewed, s.u_hat, s.var_u, "unreviewed");
  return s;
}

QuantCounts quant_counts(std::span<const double> reviewed, std::span<const double> unreviewed) {
  const auto s = quant_sums(reviewed, unreviewed);
  return {s.r_hat, s.u_hat};
}

std::optional<double> quant_recall(const QuantSums& s) {
  const double total = s.r_hat + s.u_hat;
  if (!(total > 0.0)) return std::nullopt;
  return s.r_hat / total;
}

std::optional<double> quant_recall(std::span<const double> reviewed, std::span<const double> unreviewed,
                                   std::size_t reviewed_relevant, RecallNumerator mode) {
  const auto s = quant_sums(reviewed, unreviewed);
  if (mode == RecallNumerator::estimated) return quant_recall(s);
  const double found = static_cast<double>(reviewed_relevant);
  const double total = found + s.u_hat;
  if (!(total > 0.0)) return std::nullopt;
  return found / total;
}

std::optional<double> quant_variance(const QuantSums& s) {
  const double total = s.r_hat + s.u_hat;
  if (!(total > 0.0)) return std::nullopt;
  const double t2 = total * total;
  return s.var_r / t2 + s.r_hat * s.r_hat * (s.var_r + s.var_u) / (t2 * t2);
}

std::optional<double> quant_variance(std::span<const double> reviewed, std::span<const double> unreviewed) {
  return quant_variance(quant_sums(reviewed, unreviewed));
}

std::optional<RecallEstimate> quant_ci(const QuantSums& s, double multiplier) {
  if (!(multiplier >= 0.0)) throw ParameterError("CI multiplier must be non-negative");
  const auto point = quant_recall(s);
  const auto var = quant_variance(s);
  if (!point || !var) return std::nullopt;
  RecallEstimate e;
  e.point = *point;
  e.variance_bound = *var;
  const double half = multiplier * std::sqrt(*var);
  e.raw_lower = e.point - half;
  e.raw_upper = e.point + half;
  e.ci_lower = std::clamp(e.raw_lower, 0.0, 1.0);
  e.ci_upper = std::clamp(e.raw_upper, 0.0, 1.0);
  e.r_hat = s.r_hat;
  e.u_hat = s.u_hat;
  return e;
}

std::optional<RecallEstimate> quant_ci(std::span<const double> reviewed, std::span<const double> unreviewed,
                                       double multiplier) {
  return quant_ci(quant_sums(reviewed, unreviewed), multiplier);
}

double slope_ratio(const GainPoint& knee, const GainPoint& end) {
  const double i = static_cast<double>(knee.reviewed);
  const double rel_i = static_cast<double>(knee.relevant);
  return (rel_i / i) * (static_cast<double>(end.reviewed) - i) /
         (static_cast<double>(end.relevant) - rel_i + 1.0);
}

std::optional<KneeGeometry> knee_point(std::span<const GainPoint> points, std::int64_t s) {
  if (points.size() < 3) throw DomainError("knee_point needs at least three gain points");
  if (points.front() != GainPoint{0, 0}) throw DomainError("gain curve must start at (0, 0)");
  std::size_t end = points.size();
  for (std::size_t k = 1; k < points.size(); ++k) {
    if (points[k].reviewed <= points[k - 1].reviewed) throw DomainError("gain points must increase in s");
    if (points[k].relevant < points[k - 1].relevant) throw DomainError("gain curve must be non-decreasing");
    if (points[k].reviewed == s) end = k;
  }
  if (end == points.size()) throw DomainError(fmt::format("no gain point at s = {}", s));
  const GainPoint& last = points[end];
  if (last.relevant == 0 || end < 2) return std::nullopt;

  // |Rel(s) * x - s * y| is the perpendicular distance scaled by the
  // constant chord length, and is exact in integers.
  std::size_t best = 1;
  std::int64_t best_dist = -1;
  for (std::size_t k = 1; k < end; ++k) {
    const std::int64_t cross = last.relevant * points[k].reviewed - last.reviewed * points[k].relevant;
    const std::int64_t dist = cross < 0 ? -cross : cross;
    if (dist > best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return KneeGeometry{points[best].reviewed, last.reviewed, slope_ratio(points[best], last)};
}

double hypergeometric_cdf(std::int64_t population, std::int64_t successes, std::int64_t draws, std::int64_t k) {
  if (population < 0 || successes < 0 || draws < 0 || successes > population || draws > population)
    throw DomainError(fmt::format("hypergeometric parameters out of domain (N={}, K={}, n={})", population,
                                  successes, draws));
  const std::int64_t lo = std::max<std::int64_t>(0, draws + successes - population);
  const std::int64_t hi = std::min(draws, successes);
  if (k < lo) return 0.0;
  if (k >= hi) return 1.0;

  const double log_total = log_choose(population, draws);
  auto pmf = [&](std::int64_t x) {
    return std::exp(log_choose(successes, x) + log_choose(population - successes, draws - x) - log_total);
  };
  // Sum whichever tail is shorter in mass around the mean.
  const double mean = static_cast<double>(draws) * static_cast<double>(successes) / static_cast<double>(population);
  double result;
  if (static_cast<double>(k) <= mean) {
    double sum = 0.0;
    for (std::int64_t x = lo; x <= k; ++x) sum += pmf(x);
    result = sum;
  } else {
    double sum = 0.0;
    for (std::int64_t x = k + 1; x <= hi; ++x) sum += pmf(x);
    result = 1.0 - sum;
  }
  return std::clamp(result, 0.0, 1.0);
}

std::optional<double> pearson_corr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ParameterError("pearson_corr inputs differ in length");
  if (x.size() < 2) throw ParameterError("pearson_corr needs at least two observations");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace tarstop
