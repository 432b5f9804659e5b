#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace unmix {

/// Shape parameters of a beta distribution on (0, 1).
struct BetaParams {
    double alpha;
    double beta;
};

double digamma(double x);
double trigamma(double x);

double beta_pdf(const BetaParams& params, double x);

/// Regularized incomplete beta function I_x(alpha, beta) via the standard
/// continued fraction (modified Lentz).
double beta_cdf(const BetaParams& params, double x);

/// Quantile with |cdf(result) - p| <= 1e-10, bracketed Newton with bisection
/// fallback.
double beta_inverse_cdf(const BetaParams& params, double p);

/// Maximum-likelihood fit for samples strictly inside (0, 1):
/// method-of-moments start, then Newton on the digamma equations.
BetaParams fit_beta_unit(const std::vector<double>& samples);

/// One-sample Kolmogorov-Smirnov statistic against an arbitrary CDF.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic critical value c(significance)/sqrt(n).
double ks_critical_value(std::size_t n, double significance);

}  // namespace unmix
