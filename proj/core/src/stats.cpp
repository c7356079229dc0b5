#include "refaudit/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace refaudit::stats {

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 3.0e-15;
constexpr double kTiny = 1.0e-300;

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("reg_incomplete_beta: continued fraction did not converge");
}

// Series for the lower incomplete gamma, valid for x < a + 1.
double gamma_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error("reg_lower_gamma: series did not converge");
}

// Continued fraction for the upper incomplete gamma, valid for x >= a + 1.
double gamma_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    const double an = -1.0 * i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw std::runtime_error("reg_lower_gamma: continued fraction did not converge");
}

// Strictly increasing f on [lo, hi] with f(lo) <= target <= f(hi).
template <typename F>
double bisect(F f, double lo, double hi, double target) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (f(mid) < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double reg_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("reg_incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw std::invalid_argument("reg_lower_gamma: a must be positive");
  if (x < 0.0) throw std::invalid_argument("reg_lower_gamma: x must be non-negative");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_cf(a, x);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / M_SQRT2); }

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_cdf: df must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  const double x = df / (df + t * t);
  const double half_tail = 0.5 * reg_incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - half_tail : half_tail;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0))
    throw std::invalid_argument("student_t_two_sided_p: df must be positive");
  if (t == 0.0) return 1.0;
  const double x = df / (df + t * t);
  return reg_incomplete_beta(0.5 * df, 0.5, x);
}

double student_t_ppf(double p, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_ppf: df must be positive");
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("student_t_ppf: p must be in (0, 1)");
  if (p == 0.5) return 0.0;
  double hi = 1.0;
  while (student_t_cdf(hi, df) < p && hi < 1e300) hi *= 2.0;
  double lo = -1.0;
  while (student_t_cdf(lo, df) > p && lo > -1e300) lo *= 2.0;
  return bisect([df](double t) { return student_t_cdf(t, df); }, lo, hi, p);
}

double chi_squared_cdf(double x, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("chi_squared_cdf: df must be positive");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * df, 0.5 * x);
}

double chi_squared_ppf(double p, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("chi_squared_ppf: df must be positive");
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument("chi_squared_ppf: p must be in [0, 1)");
  if (p == 0.0) return 0.0;
  double hi = df;
  while (chi_squared_cdf(hi, df) < p && hi < 1e300) hi *= 2.0;
  return bisect([df](double x) { return chi_squared_cdf(x, df); }, 0.0, hi, p);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_std: need at least 2 values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double chi_squared_gof(std::span<const std::size_t> observed,
                       std::span<const double> expected_probs) {
  if (observed.size() != expected_probs.size() || observed.empty())
    throw std::invalid_argument("chi_squared_gof: size mismatch");
  std::size_t n = 0;
  for (std::size_t o : observed) n += o;
  if (n == 0) throw std::invalid_argument("chi_squared_gof: no observations");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expect = expected_probs[i] * static_cast<double>(n);
    if (!(expect > 0.0))
      throw std::invalid_argument("chi_squared_gof: expected probability must be positive");
    const double diff = static_cast<double>(observed[i]) - expect;
    stat += diff * diff / expect;
  }
  return stat;
}

}  // namespace refaudit::stats
