#pragma once

#include <span>

// Scalar distribution functions used by the evaluation stages. Accuracy is
// well beyond what the hypothesis tests need (verified against independent
// references to ~1e-12 in the unit tests).
namespace refaudit::stats {

// Regularized incomplete beta I_x(a, b), a,b > 0, x in [0, 1].
double reg_incomplete_beta(double a, double b, double x);

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double reg_lower_gamma(double a, double x);

double normal_cdf(double z);
// Two-sided tail probability 2*(1 - Phi(|z|)), computed via erfc so it does
// not underflow to 0 until |z| is extreme.
double normal_two_sided_p(double z);

double student_t_cdf(double t, double df);
double student_t_two_sided_p(double t, double df);
// Inverse CDF; p in (0, 1).
double student_t_ppf(double p, double df);

double chi_squared_cdf(double x, double df);
double chi_squared_ppf(double p, double df);

double mean(std::span<const double> xs);
// Unbiased (n-1) sample standard deviation; xs.size() >= 2.
double sample_std(std::span<const double> xs);

// Pearson goodness-of-fit statistic for observed counts vs expected
// probabilities (must sum to 1). Returns the statistic; df = k - 1.
double chi_squared_gof(std::span<const std::size_t> observed,
                       std::span<const double> expected_probs);

}  // namespace refaudit::stats
