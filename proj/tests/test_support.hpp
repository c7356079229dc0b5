#pragma once

// Shared helpers for the test suites: scratch directories that clean up
// after themselves, file slurping, and a canned small audit configuration
// that the end-to-end tests build corpora from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "refaudit/audit.hpp"

#ifndef REFAUDIT_TEST_DATA_DIR
#define REFAUDIT_TEST_DATA_DIR "core/data"
#endif

namespace test_support {

inline std::string data_dir() { return REFAUDIT_TEST_DATA_DIR; }

// Unique scratch directory under the system temp root, removed on scope
// exit so repeated ctest runs don't accumulate state.
class scratch_dir {
 public:
  explicit scratch_dir(const std::string& tag) {
    std::random_device rd;
    std::ostringstream name;
    name << "refaudit-" << tag << "-" << std::hex << rd() << rd();
    path_ = std::filesystem::temp_directory_path() / name.str();
    std::filesystem::create_directories(path_);
  }
  ~scratch_dir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);  // best effort
  }
  scratch_dir(const scratch_dir&) = delete;
  scratch_dir& operator=(const scratch_dir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("test_support::slurp: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("test_support::spit: cannot open " + path);
  out << content;
}

// Small deterministic audit setup: 3 seeds x 60 interactions keeps every
// end-to-end test under a second while still exercising all 12 groups and
// multi-fold cross-validation.
inline refaudit::AuditConfig small_config() {
  refaudit::AuditConfig config;
  config.data_dir = data_dir();
  config.seeds = {11, 12, 13};
  config.per_seed = 60;
  return config;
}

inline std::vector<refaudit::InteractionRecord> build_corpus(
    const refaudit::AuditConfig& config) {
  const refaudit::DataTables tables = refaudit::load_data_tables(config);
  const refaudit::PlanBundle bundle = refaudit::build_plan(config, tables);
  return refaudit::generate_corpus(config, bundle.plan);
}

// ---- independent logit reference ------------------------------------------
//
// Brute-force Newton fit of a binary logit, written against the textbook
// likelihood rather than the weighted-least-squares route the library takes:
// explicit gradient X'(y - p) and Hessian -X'WX per step, step halving when
// the log-likelihood fails to improve, and standard errors from a
// Gauss-Jordan inverse of the observed information. Deliberately slow and
// simple; exists purely to cross-check the production fit.

struct newton_logit_result {
  std::vector<double> coef;  // [0] intercept, then one slope per column
  std::vector<double> se;    // same layout
  bool converged = false;
};

inline newton_logit_result newton_logit_reference(
    const refaudit::TfIdfMatrix& features, const std::vector<int>& labels) {
  const std::size_t n = features.rows;
  const std::size_t p = features.cols + 1;  // + intercept

  auto x_at = [&](std::size_t i, std::size_t j) -> double {
    return j == 0 ? 1.0 : features.at(i, j - 1);
  };

  std::vector<double> beta(p, 0.0);
  auto log_likelihood = [&](const std::vector<double>& b) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += x_at(i, j) * b[j];
      // log sigma(eta) and log(1 - sigma(eta)) in a stable form
      const double log1p_exp = eta > 30.0 ? eta : std::log1p(std::exp(eta));
      ll += labels[i] == 1 ? eta - log1p_exp : -log1p_exp;
    }
    return ll;
  };

  std::vector<double> grad(p), hess(p * p), step(p);
  double ll = log_likelihood(beta);
  bool converged = false;

  for (int iter = 0; iter < 200 && !converged; ++iter) {
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(hess.begin(), hess.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0.0;
      for (std::size_t j = 0; j < p; ++j) eta += x_at(i, j) * beta[j];
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      const double w = mu * (1.0 - mu);
      const double resid = static_cast<double>(labels[i]) - mu;
      for (std::size_t j = 0; j < p; ++j) {
        grad[j] += x_at(i, j) * resid;
        for (std::size_t k = 0; k < p; ++k)
          hess[j * p + k] += w * x_at(i, j) * x_at(i, k);
      }
    }

    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < 1e-10) {
      converged = true;
      break;
    }

    // solve H * step = grad by Gaussian elimination with partial pivoting
    std::vector<double> a = hess;
    step = grad;
    for (std::size_t col = 0; col < p; ++col) {
      std::size_t pivot = col;
      for (std::size_t r = col + 1; r < p; ++r)
        if (std::abs(a[r * p + col]) > std::abs(a[pivot * p + col])) pivot = r;
      if (std::abs(a[pivot * p + col]) < 1e-300)
        throw std::runtime_error("newton_logit_reference: singular Hessian");
      if (pivot != col) {
        for (std::size_t c = 0; c < p; ++c) std::swap(a[col * p + c], a[pivot * p + c]);
        std::swap(step[col], step[pivot]);
      }
      const double inv = 1.0 / a[col * p + col];
      for (std::size_t r = col + 1; r < p; ++r) {
        const double f = a[r * p + col] * inv;
        if (f == 0.0) continue;
        for (std::size_t c = col; c < p; ++c) a[r * p + c] -= f * a[col * p + c];
        step[r] -= f * step[col];
      }
    }
    for (std::size_t col = p; col-- > 0;) {
      for (std::size_t c = col + 1; c < p; ++c)
        step[col] -= a[col * p + c] * step[c];
      step[col] /= a[col * p + col];
    }

    // step halving keeps the likelihood monotone
    double scale = 1.0;
    for (int half = 0; half < 40; ++half) {
      std::vector<double> trial = beta;
      for (std::size_t j = 0; j < p; ++j) trial[j] += scale * step[j];
      const double trial_ll = log_likelihood(trial);
      if (trial_ll >= ll - 1e-12) {
        beta = std::move(trial);
        ll = trial_ll;
        break;
      }
      scale *= 0.5;
    }
  }

  // standard errors: invert the observed information with Gauss-Jordan
  std::vector<double> info(p * p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0.0;
    for (std::size_t j = 0; j < p; ++j) eta += x_at(i, j) * beta[j];
    const double mu = 1.0 / (1.0 + std::exp(-eta));
    const double w = mu * (1.0 - mu);
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < p; ++k)
        info[j * p + k] += w * x_at(i, j) * x_at(i, k);
  }
  std::vector<double> inv(p * p, 0.0);
  for (std::size_t j = 0; j < p; ++j) inv[j * p + j] = 1.0;
  for (std::size_t col = 0; col < p; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < p; ++r)
      if (std::abs(info[r * p + col]) > std::abs(info[pivot * p + col])) pivot = r;
    if (std::abs(info[pivot * p + col]) < 1e-300)
      throw std::runtime_error("newton_logit_reference: singular information");
    if (pivot != col)
      for (std::size_t c = 0; c < p; ++c) {
        std::swap(info[col * p + c], info[pivot * p + c]);
        std::swap(inv[col * p + c], inv[pivot * p + c]);
      }
    const double d = info[col * p + col];
    for (std::size_t c = 0; c < p; ++c) {
      info[col * p + c] /= d;
      inv[col * p + c] /= d;
    }
    for (std::size_t r = 0; r < p; ++r) {
      if (r == col) continue;
      const double f = info[r * p + col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < p; ++c) {
        info[r * p + c] -= f * info[col * p + c];
        inv[r * p + c] -= f * inv[col * p + c];
      }
    }
  }

  newton_logit_result result;
  result.coef = beta;
  result.converged = converged;
  result.se.resize(p);
  for (std::size_t j = 0; j < p; ++j) result.se[j] = std::sqrt(inv[j * p + j]);
  return result;
}

// Random well-conditioned binary-logit problem for cross-checking the
// production fit: moderate coefficients and n >> p keep it far away from
// separation.
struct logit_problem {
  refaudit::TfIdfMatrix features;
  std::vector<int> labels;
  std::vector<std::string> terms;
};

inline logit_problem make_logit_problem(std::uint64_t seed, std::size_t n,
                                        std::size_t p) {
  refaudit::RngEngine rng = refaudit::make_rng(seed);
  logit_problem prob;
  prob.features.rows = n;
  prob.features.cols = p;
  prob.features.values.resize(n * p);
  for (double& v : prob.features.values)
    v = 0.8 * refaudit::standard_normal(rng);

  std::vector<double> truth(p + 1);
  for (double& b : truth) b = 0.7 * refaudit::standard_normal(rng);

  prob.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double eta = truth[0];
    for (std::size_t j = 0; j < p; ++j)
      eta += prob.features.at(i, j) * truth[j + 1];
    const double mu = 1.0 / (1.0 + std::exp(-eta));
    prob.labels[i] = refaudit::uniform_real(rng) < mu ? 1 : 0;
  }
  for (std::size_t j = 0; j < p; ++j) prob.terms.push_back("t" + std::to_string(j));
  return prob;
}

}  // namespace test_support
