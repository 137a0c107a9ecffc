#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "tarstop/simulation.hpp"

namespace tarstop {

/// Model-based counts: r_hat sums p_i over reviewed documents, u_hat over
/// unreviewed ones. var_* are the matching Bernoulli variance sums
/// sum p_i (1 - p_i).
struct QuantSums {
  double r_hat = 0.0;
  double u_hat = 0.0;
  double var_r = 0.0;
  double var_u = 0.0;
};

/// Throws DomainError if any probability is outside (0, 1).
QuantSums quant_sums(std::span<const double> reviewed, std::span<const double> unreviewed);

struct QuantCounts {
  double r_hat = 0.0;
  double u_hat = 0.0;
};

QuantCounts quant_counts(std::span<const double> reviewed, std::span<const double> unreviewed);

enum class RecallNumerator {
  estimated,  ///< r_hat / (r_hat + u_hat)
  observed,   ///< R_r / (R_r + u_hat), with R_r the reviewed relevant count
};

/// Point estimate of recall; nullopt when the denominator is zero.
std::optional<double> quant_recall(std::span<const double> reviewed, std::span<const double> unreviewed,
                                   std::size_t reviewed_relevant = 0,
                                   RecallNumerator mode = RecallNumerator::estimated);
std::optional<double> quant_recall(const QuantSums& sums);

/// First-order Taylor bound on the variance of the recall estimate:
///   var_r / (r+u)^2 + r^2 (var_r + var_u) / (r+u)^4.
/// nullopt when r_hat + u_hat is zero.
std::optional<double> quant_variance(std::span<const double> reviewed, std::span<const double> unreviewed);
std::optional<double> quant_variance(const QuantSums& sums);

struct RecallEstimate {
  double point = 0.0;
  double variance_bound = 0.0;
  /// point -/+ multiplier * sqrt(variance_bound), unclamped.
  double raw_lower = 0.0;
  double raw_upper = 0.0;
  /// Reported interval, clamped to [0, 1].
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double r_hat = 0.0;
  double u_hat = 0.0;
};

inline constexpr double kDefaultCiMultiplier = 2.0;

std::optional<RecallEstimate> quant_ci(std::span<const double> reviewed, std::span<const double> unreviewed,
                                       double multiplier = kDefaultCiMultiplier);
std::optional<RecallEstimate> quant_ci(const QuantSums& sums, double multiplier = kDefaultCiMultiplier);

struct KneeGeometry {
  std::int64_t knee = 0;  ///< training size i at the knee
  std::int64_t s = 0;
  double rho = 0.0;
};

/// Slope ratio (Rel(i)/i) * (s - i) / (Rel(s) - Rel(i) + 1).
double slope_ratio(const GainPoint& knee, const GainPoint& end);

/// Locates the point of maximum perpendicular distance from the chord
/// (0,0)-(s,Rel(s)) among points strictly between them; ties go to the
/// smaller training size. `points` must start at (0,0), be strictly
/// increasing in training size, and contain the point at `s`. Returns
/// nullopt when Rel(s) = 0 or no interior point exists.
std::optional<KneeGeometry> knee_point(std::span<const GainPoint> points, std::int64_t s);

/// P(X <= k) for X ~ Hypergeometric(population, successes, draws), summed in
/// log space. Exactly 0 below the support and 1 at or above its top.
double hypergeometric_cdf(std::int64_t population, std::int64_t successes, std::int64_t draws, std::int64_t k);

/// Product-moment correlation; nullopt when either input has zero variance.
std::optional<double> pearson_corr(std::span<const double> x, std::span<const double> y);

}  // namespace tarstop
