#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "refaudit/classifiers.hpp"

namespace refaudit {

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::logistic_regression_l2: return "logreg";
    case ClassifierKind::multilayer_perceptron: return "mlp";
    case ClassifierKind::gradient_boosted_trees: return "gbt";
  }
  return "?";
}

std::optional<ClassifierKind> classifier_kind_from_string(std::string_view s) {
  if (s == "logreg" || s == "logistic_regression_l2")
    return ClassifierKind::logistic_regression_l2;
  if (s == "mlp" || s == "multilayer_perceptron")
    return ClassifierKind::multilayer_perceptron;
  if (s == "gbt" || s == "gradient_boosted_trees")
    return ClassifierKind::gradient_boosted_trees;
  return std::nullopt;
}

namespace {

void validate_training_inputs(const TfIdfMatrix& matrix, std::span<const int> labels,
                              std::span<const std::size_t> rows, int num_classes) {
  if (num_classes < 2)
    throw std::invalid_argument("classifier: need at least 2 classes");
  if (labels.size() != matrix.rows)
    throw std::invalid_argument("classifier: label count does not match matrix rows");
  if (rows.empty()) throw std::invalid_argument("classifier: empty training set");
  std::vector<bool> present(num_classes, false);
  for (std::size_t r : rows) {
    if (r >= matrix.rows)
      throw std::invalid_argument("classifier: row index out of range");
    const int y = labels[r];
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("classifier: label out of range");
    present[y] = true;
  }
  int distinct = 0;
  for (bool p : present) distinct += p;
  if (distinct < 2)
    throw std::invalid_argument(
        "classifier: degenerate training set (fewer than 2 classes present)");
}

std::vector<int> argmax_predict(const TfIdfMatrix& matrix,
                                std::span<const std::size_t> rows,
                                std::span<const double> weights, int classes) {
  const std::size_t d = matrix.cols;
  std::vector<int> out;
  out.reserve(rows.size());
  std::vector<double> z(classes);
  for (std::size_t r : rows) {
    const double* x = matrix.values.data() + r * d;
    for (int c = 0; c < classes; ++c) z[c] = weights[d * classes + c];  // intercept
    for (std::size_t j = 0; j < d; ++j) {
      const double v = x[j];
      if (v == 0.0) continue;
      const double* wj = weights.data() + j * classes;
      for (int c = 0; c < classes; ++c) z[c] += v * wj[c];
    }
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (z[c] > z[best]) best = c;
    out.push_back(best);
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Strong-Wolfe line search (bracketing plus zoom with safeguarded quadratic
// interpolation). Guaranteeing the curvature condition keeps every (s, y)
// pair usable for the L-BFGS history, which is what lets the optimizer
// actually reach a 1e-6 gradient instead of stalling on tiny Armijo steps.
struct LineSearchState {
  std::vector<double> w_trial, g_trial;
  double f_trial = 0.0;
  double dphi_trial = 0.0;
};

class WolfeSearch {
 public:
  WolfeSearch(const SoftmaxObjective& objective, std::span<const double> w,
              std::span<const double> direction, double f0, double descent,
              LineSearchState& state)
      : objective_(objective),
        w_(w),
        direction_(direction),
        f0_(f0),
        descent_(descent),
        state_(state) {}

  // Returns the accepted step, or 0 when no acceptable step exists at this
  // numeric precision. On success state_ holds the trial point and gradient.
  double run() {
    constexpr double kMaxStep = 64.0;
    double prev_alpha = 0.0, prev_f = f0_, prev_dphi = descent_;
    double alpha = 1.0;
    for (int i = 0; i < 20; ++i) {
      eval(alpha);
      if (state_.f_trial > f0_ + kC1 * alpha * descent_ ||
          (i > 0 && state_.f_trial >= prev_f))
        return zoom(prev_alpha, prev_f, prev_dphi, alpha, state_.f_trial);
      if (std::fabs(state_.dphi_trial) <= -kC2 * descent_) return alpha;
      if (state_.dphi_trial >= 0.0)
        return zoom(alpha, state_.f_trial, state_.dphi_trial, prev_alpha, prev_f);
      prev_alpha = alpha;
      prev_f = state_.f_trial;
      prev_dphi = state_.dphi_trial;
      alpha = std::min(2.0 * alpha, kMaxStep);
      if (prev_alpha == kMaxStep) break;
    }
    // Ran off the bracketing budget while still descending: the last
    // evaluated point is the best one seen, so take it when it helps.
    return state_.f_trial < f0_ ? prev_alpha : 0.0;
  }

 private:
  static constexpr double kC1 = 1e-4;
  static constexpr double kC2 = 0.9;

  void eval(double alpha) {
    for (std::size_t k = 0; k < w_.size(); ++k)
      state_.w_trial[k] = w_[k] + alpha * direction_[k];
    state_.f_trial = objective_.value_and_gradient(state_.w_trial, state_.g_trial);
    state_.dphi_trial = dot(state_.g_trial, direction_);
  }

  // lo always satisfies the sufficient-decrease condition; hi does not (or
  // lies past a rising stretch). Shrinks the bracket until strong Wolfe
  // holds or the interval degenerates.
  double zoom(double lo, double f_lo, double dphi_lo, double hi, double f_hi) {
    double best_accept = 0.0;
    for (int j = 0; j < 30; ++j) {
      if (!(std::fabs(hi - lo) > 1e-16 * std::max(1.0, std::fabs(lo)))) break;

      // Quadratic through (lo, f_lo, dphi_lo) and (hi, f_hi) when its
      // minimizer lands inside the bracket with margin; bisection otherwise.
      const double width = hi - lo;
      double alpha = lo + 0.5 * width;
      const double denom = 2.0 * (f_hi - f_lo - dphi_lo * width);
      if (denom != 0.0) {
        const double q = lo - dphi_lo * width * width / denom;
        const double margin = 0.1 * std::fabs(width);
        if (q > std::min(lo, hi) + margin && q < std::max(lo, hi) - margin)
          alpha = q;
      }

      eval(alpha);
      if (state_.f_trial > f0_ + kC1 * alpha * descent_ || state_.f_trial >= f_lo) {
        hi = alpha;
        f_hi = state_.f_trial;
      } else {
        if (std::fabs(state_.dphi_trial) <= -kC2 * descent_) return alpha;
        if (state_.dphi_trial * (hi - lo) >= 0.0) {
          hi = lo;
          f_hi = f_lo;
        }
        lo = alpha;
        f_lo = state_.f_trial;
        dphi_lo = state_.dphi_trial;
        best_accept = alpha;
      }
    }
    if (best_accept > 0.0) {
      eval(best_accept);  // re-sync the trial state with the returned step
      return best_accept;
    }
    return 0.0;
  }

  const SoftmaxObjective& objective_;
  std::span<const double> w_;
  std::span<const double> direction_;
  double f0_;
  double descent_;
  LineSearchState& state_;
};

}  // namespace

SoftmaxObjective::SoftmaxObjective(const TfIdfMatrix& matrix,
                                   std::span<const int> labels,
                                   std::span<const std::size_t> rows, int num_classes,
                                   double l2_strength)
    : matrix_(&matrix),
      labels_(labels),
      rows_(rows.begin(), rows.end()),
      classes_(num_classes),
      cols_(matrix.cols),
      l2_(l2_strength) {
  validate_training_inputs(matrix, labels, rows, num_classes);
  nz_offsets_.reserve(rows_.size() + 1);
  nz_offsets_.push_back(0);
  for (std::size_t r : rows_) {
    const double* x = matrix.values.data() + r * cols_;
    for (std::size_t j = 0; j < cols_; ++j) {
      if (x[j] == 0.0) continue;
      nz_cols_.push_back(static_cast<std::uint32_t>(j));
      nz_vals_.push_back(x[j]);
    }
    nz_offsets_.push_back(nz_cols_.size());
  }
}

double SoftmaxObjective::value(std::span<const double> w) const {
  return value_and_gradient(w, {});
}

double SoftmaxObjective::value_and_gradient(std::span<const double> w,
                                            std::span<double> grad) const {
  const bool want_grad = !grad.empty();
  if (w.size() != dim() || (want_grad && grad.size() != dim()))
    throw std::invalid_argument("SoftmaxObjective: bad weight vector size");
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  const double n = static_cast<double>(rows_.size());
  const double inv_n = 1.0 / n;
  std::vector<double> z(classes_);
  double loss = 0.0;

  for (std::size_t ri = 0; ri < rows_.size(); ++ri) {
    const std::size_t begin = nz_offsets_[ri];
    const std::size_t end = nz_offsets_[ri + 1];
    for (int c = 0; c < classes_; ++c) z[c] = w[cols_ * classes_ + c];
    for (std::size_t t = begin; t < end; ++t) {
      const double v = nz_vals_[t];
      const double* wj = w.data() + nz_cols_[t] * static_cast<std::size_t>(classes_);
      for (int c = 0; c < classes_; ++c) z[c] += v * wj[c];
    }
    double zmax = z[0];
    for (int c = 1; c < classes_; ++c) zmax = std::max(zmax, z[c]);
    double denom = 0.0;
    for (int c = 0; c < classes_; ++c) {
      z[c] = std::exp(z[c] - zmax);
      denom += z[c];
    }
    const int y = labels_[rows_[ri]];
    loss -= std::log(z[y] / denom) * inv_n;
    if (!want_grad) continue;
    const double inv_denom_n = inv_n / denom;
    for (int c = 0; c < classes_; ++c) z[c] *= inv_denom_n;  // z is now delta
    z[y] -= inv_n;
    for (std::size_t t = begin; t < end; ++t) {
      const double v = nz_vals_[t];
      double* gj = grad.data() + nz_cols_[t] * static_cast<std::size_t>(classes_);
      for (int c = 0; c < classes_; ++c) gj[c] += v * z[c];
    }
    double* gb = grad.data() + cols_ * static_cast<std::size_t>(classes_);
    for (int c = 0; c < classes_; ++c) gb[c] += z[c];
  }

  // L2 on the non-intercept block.
  const double reg_scale = l2_ * inv_n;
  double reg = 0.0;
  for (std::size_t j = 0; j < cols_; ++j) {
    for (int c = 0; c < classes_; ++c) {
      const double wv = w[j * classes_ + c];
      reg += wv * wv;
      if (want_grad) grad[j * classes_ + c] += reg_scale * wv;
    }
  }
  return loss + 0.5 * reg_scale * reg;
}

std::vector<int> SoftmaxModel::predict(const TfIdfMatrix& matrix,
                                       std::span<const std::size_t> rows) const {
  if (matrix.cols != n_features)
    throw std::invalid_argument("SoftmaxModel: feature count mismatch");
  return argmax_predict(matrix, rows, weights, num_classes);
}

SoftmaxModel train_softmax(const TfIdfMatrix& matrix, std::span<const int> labels,
                           std::span<const std::size_t> train_rows, int num_classes,
                           const ClassifierSpec& spec) {
  const SoftmaxObjective objective(matrix, labels, train_rows, num_classes,
                                   spec.l2_strength);
  const std::size_t n = objective.dim();

  std::vector<double> w(n, 0.0), g(n);
  double f = objective.value_and_gradient(w, g);
  LineSearchState ls;
  ls.w_trial.resize(n);
  ls.g_trial.resize(n);

  // L-BFGS with history 10 and a strong-Wolfe line search.
  constexpr std::size_t kHistory = 10;
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> q(n), direction(n), alpha(kHistory);

  SoftmaxModel model;
  model.n_features = matrix.cols;
  model.num_classes = num_classes;
  int iter = 0;
  for (; iter < spec.max_iterations; ++iter) {
    if (max_abs(g) <= spec.tolerance) {
      model.converged = true;
      break;
    }

    // Two-loop recursion for the search direction.
    q = g;
    const std::size_t h = s_hist.size();
    for (std::size_t i = h; i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], q);
      for (std::size_t k = 0; k < n; ++k) q[k] -= alpha[i] * y_hist[i][k];
    }
    double gamma = 1.0;
    if (h > 0) {
      const double yy = dot(y_hist[h - 1], y_hist[h - 1]);
      if (yy > 0.0) gamma = 1.0 / (rho_hist[h - 1] * yy);
    }
    for (std::size_t k = 0; k < n; ++k) q[k] *= gamma;
    for (std::size_t i = 0; i < h; ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], q);
      for (std::size_t k = 0; k < n; ++k)
        q[k] += (alpha[i] - beta) * s_hist[i][k];
    }
    for (std::size_t k = 0; k < n; ++k) direction[k] = -q[k];

    double descent = dot(g, direction);
    if (descent >= 0.0) {  // safeguard: fall back to steepest descent
      for (std::size_t k = 0; k < n; ++k) direction[k] = -g[k];
      descent = -dot(g, g);
    }

    WolfeSearch search(objective, w, direction, f, descent, ls);
    const double step = search.run();
    if (step <= 0.0) break;  // stalled at numeric precision
    f = ls.f_trial;

    std::vector<double> s_vec(n), y_vec(n);
    for (std::size_t k = 0; k < n; ++k) {
      s_vec[k] = ls.w_trial[k] - w[k];
      y_vec[k] = ls.g_trial[k] - g[k];
    }
    const double sy = dot(s_vec, y_vec);
    if (sy > 1e-12) {
      if (s_hist.size() == kHistory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s_vec));
      y_hist.push_back(std::move(y_vec));
      rho_hist.push_back(1.0 / sy);
    }
    w.swap(ls.w_trial);
    g.swap(ls.g_trial);
  }

  model.weights = std::move(w);
  model.iterations = iter;
  model.final_gradient_norm = max_abs(g);
  if (!model.converged) model.converged = model.final_gradient_norm <= spec.tolerance;
  return model;
}

std::vector<int> train_and_predict(const ClassifierSpec& spec,
                                   const TfIdfMatrix& matrix,
                                   std::span<const int> labels,
                                   std::span<const std::size_t> train_rows,
                                   std::span<const std::size_t> test_rows,
                                   int num_classes) {
  validate_training_inputs(matrix, labels, train_rows, num_classes);
  if (test_rows.empty())
    throw std::invalid_argument("train_and_predict: empty test set");
  for (std::size_t r : test_rows)
    if (r >= matrix.rows)
      throw std::invalid_argument("train_and_predict: test row out of range");

  switch (spec.kind) {
    case ClassifierKind::logistic_regression_l2:
      return train_softmax(matrix, labels, train_rows, num_classes, spec)
          .predict(matrix, test_rows);
    case ClassifierKind::multilayer_perceptron:
      return train_mlp(matrix, labels, train_rows, num_classes, spec)
          .predict(matrix, test_rows);
    case ClassifierKind::gradient_boosted_trees:
      return train_boosted_trees(matrix, labels, train_rows, num_classes, spec)
          .predict(matrix, test_rows);
  }
  throw std::invalid_argument("train_and_predict: unknown classifier kind");
}

}  // namespace refaudit
