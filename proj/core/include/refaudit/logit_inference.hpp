#pragma once

#include <span>
#include <string>
#include <vector>

#include "refaudit/text_features.hpp"

namespace refaudit {

// Flag thresholds for (quasi-)separated terms: maximum-likelihood logit has
// no finite optimum under separation, so runaway coefficients or standard
// errors mark that term's p-value as unreliable instead of being "fixed" by
// penalization.
inline constexpr double kSeparationBetaLimit = 15.0;
inline constexpr double kSeparationSeLimit = 50.0;

// Maximum-likelihood binary logit over TF-IDF term columns plus an
// intercept. Labels use the female=0 / male=1 coding throughout, so a
// negative term coefficient means the term shifts odds toward class 0.
struct StatLogitFit {
  std::vector<std::string> terms;
  std::vector<double> beta;   // per term
  std::vector<double> se;
  std::vector<double> z;      // beta / se
  std::vector<double> p;      // two-sided, normal reference
  std::vector<bool> separation_suspect;

  double intercept = 0.0;
  double intercept_se = 0.0;

  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;

  bool any_suspect() const;
};

// Fits by iteratively reweighted least squares: convergence when the
// deviance changes by less than 1e-8, cap 100 iterations. Standard errors
// come from the inverse observed information at the returned coefficients.
//
// Throws std::invalid_argument on non-binary labels, a single represented
// class, or column count >= row count; std::runtime_error on a singular
// information matrix (naming the collinear column) or a non-finite
// likelihood. Quasi-separation is not an error: the affected terms are
// flagged and `converged` may be false.
StatLogitFit fit_unpenalized_logit(const TfIdfMatrix& features,
                                   std::span<const int> labels,
                                   std::span<const std::string> terms);

}  // namespace refaudit
