#pragma once

#include <span>
#include <vector>

namespace synthguard {

// Standard normal CDF.
double normal_cdf(double x);

// Regularized incomplete gamma functions, P(a,x) + Q(a,x) = 1.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_sf(double statistic, double df);

// Two-sample Kolmogorov-Smirnov statistic, sup |F_a - F_b|. Inputs need not
// be sorted; NaNs must be filtered out by the caller.
double ks_two_sample(std::span<const double> a, std::span<const double> b);

// Pearson chi-square goodness of fit of observed counts against expected
// counts (same length, expected > 0 after the caller's bucket merging).
struct GofResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};
GofResult chi_square_gof(std::span<const double> observed,
                         std::span<const double> expected);

}  // namespace synthguard
