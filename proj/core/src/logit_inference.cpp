#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "refaudit/logit_inference.hpp"
#include "refaudit/stats.hpp"

namespace refaudit {

namespace {

constexpr double kDevianceTol = 1e-8;
constexpr int kMaxIrlsIterations = 100;
constexpr double kWeightFloor = 1e-10;
// Runaway coefficients mid-fit mean the likelihood has no finite optimum;
// past this point a singular information matrix is separation, not
// collinearity.
constexpr double kRunawayBeta = 8.0;

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double softplus(double eta) {
  if (eta > 30.0) return eta;
  if (eta < -30.0) return std::exp(eta);
  return std::log1p(std::exp(eta));
}

// In-place lower Cholesky of a dense symmetric matrix (row-major, full
// storage). Returns false on a non-positive pivot, reporting its index.
bool cholesky_factor(std::vector<double>& a, std::size_t n, std::size_t& fail_col) {
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) diag -= a[j * n + k] * a[j * n + k];
    if (!(diag > 0.0)) {
      fail_col = j;
      return false;
    }
    const double root = std::sqrt(diag);
    a[j * n + j] = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) v -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = v / root;
    }
  }
  return true;
}

// Solves L L^T x = b given the factor from cholesky_factor.
void cholesky_solve(const std::vector<double>& l, std::size_t n,
                    std::vector<double>& b) {
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t k = 0; k < i; ++k) v -= l[i * n + k] * b[k];
    b[i] = v / l[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) v -= l[k * n + ii] * b[k];
    b[ii] = v / l[ii * n + ii];
  }
}

struct IrlsWork {
  std::vector<double> eta, prob, weight;
  std::vector<double> grad, hess;  // hess is (d+1)^2 row-major
};

}  // namespace

bool StatLogitFit::any_suspect() const {
  return std::any_of(separation_suspect.begin(), separation_suspect.end(),
                     [](bool b) { return b; });
}

StatLogitFit fit_unpenalized_logit(const TfIdfMatrix& features,
                                   std::span<const int> labels,
                                   std::span<const std::string> terms) {
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  const std::size_t dim = d + 1;  // intercept column appended last

  if (labels.size() != n)
    throw std::invalid_argument("fit_unpenalized_logit: label count mismatch");
  if (terms.size() != d)
    throw std::invalid_argument("fit_unpenalized_logit: term count mismatch");
  if (dim >= n)
    throw std::invalid_argument(
        "fit_unpenalized_logit: need more documents than terms (have " +
        std::to_string(n) + " documents for " + std::to_string(dim) +
        " coefficients)");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1)
      throw std::invalid_argument("fit_unpenalized_logit: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  if (positives == 0 || positives == n)
    throw std::invalid_argument(
        "fit_unpenalized_logit: both classes must be present");

  const auto column_name = [&](std::size_t j) -> std::string {
    return j == d ? "intercept" : terms[j];
  };

  std::vector<double> beta(dim, 0.0);
  IrlsWork w;
  w.eta.resize(n);
  w.prob.resize(n);
  w.weight.resize(n);
  w.grad.resize(dim);
  w.hess.resize(dim * dim);

  const double* x = features.values.data();

  const auto compute_linear = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      double eta = beta[d];
      const double* xi = x + i * d;
      for (std::size_t j = 0; j < d; ++j)
        if (xi[j] != 0.0) eta += xi[j] * beta[j];
      w.eta[i] = eta;
      w.prob[i] = sigmoid(eta);
      w.weight[i] = std::max(w.prob[i] * (1.0 - w.prob[i]), kWeightFloor);
    }
  };

  const auto compute_deviance = [&]() {
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      dev += softplus(w.eta[i]) - (labels[i] == 1 ? w.eta[i] : 0.0);
    return 2.0 * dev;
  };

  // Gradient of the log-likelihood and the observed information X^T W X,
  // exploiting row sparsity (full lower triangle mirrored afterwards).
  const auto build_system = [&]() {
    std::fill(w.grad.begin(), w.grad.end(), 0.0);
    std::fill(w.hess.begin(), w.hess.end(), 0.0);
    std::vector<std::size_t> idx;
    std::vector<double> val;
    for (std::size_t i = 0; i < n; ++i) {
      idx.clear();
      val.clear();
      const double* xi = x + i * d;
      for (std::size_t j = 0; j < d; ++j)
        if (xi[j] != 0.0) {
          idx.push_back(j);
          val.push_back(xi[j]);
        }
      idx.push_back(d);
      val.push_back(1.0);
      const double resid = static_cast<double>(labels[i]) - w.prob[i];
      const double wi = w.weight[i];
      for (std::size_t a = 0; a < idx.size(); ++a) {
        w.grad[idx[a]] += resid * val[a];
        const double wa = wi * val[a];
        for (std::size_t b = 0; b <= a; ++b)
          w.hess[idx[a] * dim + idx[b]] += wa * val[b];
      }
    }
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = a + 1; b < dim; ++b)
        w.hess[a * dim + b] = w.hess[b * dim + a];
  };

  StatLogitFit fit;
  fit.terms.assign(terms.begin(), terms.end());

  double prev_dev = std::numeric_limits<double>::infinity();
  std::vector<double> chol;
  for (int iter = 1; iter <= kMaxIrlsIterations; ++iter) {
    compute_linear();
    fit.deviance = compute_deviance();
    if (!std::isfinite(fit.deviance))
      throw std::runtime_error("fit_unpenalized_logit: non-finite likelihood");
    if (std::abs(fit.deviance - prev_dev) < kDevianceTol) {
      fit.converged = true;
      break;
    }
    prev_dev = fit.deviance;

    build_system();
    chol = w.hess;
    std::size_t fail_col = 0;
    if (!cholesky_factor(chol, dim, fail_col)) {
      const double worst =
          std::abs(*std::max_element(beta.begin(), beta.end(),
                                     [](double a, double b) {
                                       return std::abs(a) < std::abs(b);
                                     }));
      if (worst > kRunawayBeta) break;  // separation; flags set below
      throw std::runtime_error(
          "fit_unpenalized_logit: singular information matrix, column '" +
          column_name(fail_col) + "' is collinear with earlier columns");
    }
    std::vector<double> step = w.grad;
    cholesky_solve(chol, dim, step);
    for (std::size_t j = 0; j < dim; ++j) beta[j] += step[j];
    for (double b : beta)
      if (!std::isfinite(b))
        throw std::runtime_error("fit_unpenalized_logit: non-finite likelihood");
    fit.iterations = iter;
  }

  // Standard errors from the observed information at the final coefficients.
  compute_linear();
  fit.deviance = compute_deviance();
  build_system();
  chol = w.hess;
  std::size_t fail_col = 0;
  if (!cholesky_factor(chol, dim, fail_col))
    throw std::runtime_error(
        "fit_unpenalized_logit: singular information matrix, column '" +
        column_name(fail_col) + "' is collinear with earlier columns");

  std::vector<double> se(dim, 0.0);
  std::vector<double> unit(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    std::fill(unit.begin(), unit.end(), 0.0);
    unit[j] = 1.0;
    // forward solve L y = e_j; diag of H^-1 is the squared norm of y
    for (std::size_t i = 0; i < dim; ++i) {
      double v = unit[i];
      for (std::size_t k = 0; k < i; ++k) v -= chol[i * dim + k] * unit[k];
      unit[i] = v / chol[i * dim + i];
    }
    double sum = 0.0;
    for (std::size_t i = j; i < dim; ++i) sum += unit[i] * unit[i];
    se[j] = std::sqrt(sum);
  }

  fit.beta.assign(beta.begin(), beta.begin() + static_cast<std::ptrdiff_t>(d));
  fit.se.assign(se.begin(), se.begin() + static_cast<std::ptrdiff_t>(d));
  fit.intercept = beta[d];
  fit.intercept_se = se[d];
  fit.z.resize(d);
  fit.p.resize(d);
  fit.separation_suspect.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    fit.z[j] = fit.beta[j] / fit.se[j];
    fit.p[j] = stats::normal_two_sided_p(fit.z[j]);
    fit.separation_suspect[j] = std::abs(fit.beta[j]) > kSeparationBetaLimit ||
                                fit.se[j] > kSeparationSeLimit;
  }
  return fit;
}

}  // namespace refaudit
