#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/text_features.hpp"

namespace refaudit {

enum class ClassifierKind : std::uint8_t {
  logistic_regression_l2,
  multilayer_perceptron,
  gradient_boosted_trees,
};

std::string_view to_string(ClassifierKind kind);
std::optional<ClassifierKind> classifier_kind_from_string(std::string_view s);

// Hyperparameters for all three families (only the block matching `kind`
// applies). Training is bit-deterministic given (spec, data): the linear
// and tree models use no randomness at all; the MLP derives its weight
// initialization and batch shuffling from train_seed.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::logistic_regression_l2;
  std::uint64_t train_seed = 0;

  // logistic_regression_l2: multinomial fit by L-BFGS on
  // mean cross-entropy + l2_strength/(2n) * ||W||^2 (intercept unpenalized),
  // run until the gradient max-norm falls below tolerance.
  double l2_strength = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 1000;

  // multilayer_perceptron: one ReLU hidden layer, softmax output, Adam.
  int hidden_width = 64;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 32;

  // gradient_boosted_trees: per-class regression trees on softmax
  // gradients, histogram split finding, full subsampling.
  int rounds = 200;
  int max_depth = 3;
  double shrinkage = 0.1;
};

// ---- logistic regression ---------------------------------------------------

// The training objective, exposed so tests can check the analytic gradient
// against finite differences. Weight layout: w[j * num_classes + c] for
// feature j in [0, cols), plus an intercept row at j = cols.
class SoftmaxObjective {
 public:
  SoftmaxObjective(const TfIdfMatrix& matrix, std::span<const int> labels,
                   std::span<const std::size_t> rows, int num_classes,
                   double l2_strength);

  std::size_t dim() const { return (cols_ + 1) * static_cast<std::size_t>(classes_); }
  int num_classes() const { return classes_; }

  double value(std::span<const double> w) const;
  // Returns the objective value and fills grad (same layout as w).
  double value_and_gradient(std::span<const double> w, std::span<double> grad) const;

 private:
  const TfIdfMatrix* matrix_;
  std::span<const int> labels_;
  std::vector<std::size_t> rows_;
  int classes_;
  std::size_t cols_;
  double l2_;
  // Compressed copy of the training slice; evaluations touch only nonzeros.
  std::vector<std::size_t> nz_offsets_;
  std::vector<std::uint32_t> nz_cols_;
  std::vector<double> nz_vals_;
};

struct SoftmaxModel {
  std::size_t n_features = 0;
  int num_classes = 0;
  std::vector<double> weights;  // (n_features+1) * num_classes, SoftmaxObjective layout
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;

  std::vector<int> predict(const TfIdfMatrix& matrix,
                           std::span<const std::size_t> rows) const;
};

SoftmaxModel train_softmax(const TfIdfMatrix& matrix, std::span<const int> labels,
                           std::span<const std::size_t> train_rows, int num_classes,
                           const ClassifierSpec& spec);

// ---- multilayer perceptron ---------------------------------------------------

struct MlpModel {
  std::size_t n_features = 0;
  int hidden_width = 0;
  int num_classes = 0;
  std::vector<float> w1, b1;  // n_features x hidden, hidden
  std::vector<float> w2, b2;  // hidden x classes, classes

  std::vector<int> predict(const TfIdfMatrix& matrix,
                           std::span<const std::size_t> rows) const;
};

MlpModel train_mlp(const TfIdfMatrix& matrix, std::span<const int> labels,
                   std::span<const std::size_t> train_rows, int num_classes,
                   const ClassifierSpec& spec);

// ---- gradient-boosted trees ---------------------------------------------------

struct TreeNode {
  // feature >= 0: internal node (value < threshold goes left); -1: leaf.
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double leaf_value = 0.0;
};

struct BoostedTreesModel {
  std::size_t n_features = 0;
  int num_classes = 0;
  int rounds = 0;
  // trees[round * num_classes + class]
  std::vector<std::vector<TreeNode>> trees;

  std::vector<int> predict(const TfIdfMatrix& matrix,
                           std::span<const std::size_t> rows) const;
};

BoostedTreesModel train_boosted_trees(const TfIdfMatrix& matrix,
                                      std::span<const int> labels,
                                      std::span<const std::size_t> train_rows,
                                      int num_classes, const ClassifierSpec& spec);

// ---- uniform entry point -----------------------------------------------------

// Trains per spec.kind on train_rows and returns predicted labels for
// test_rows. Throws std::invalid_argument on empty train/test sets, labels
// outside [0, num_classes), or a training set missing some class entirely.
std::vector<int> train_and_predict(const ClassifierSpec& spec,
                                   const TfIdfMatrix& matrix,
                                   std::span<const int> labels,
                                   std::span<const std::size_t> train_rows,
                                   std::span<const std::size_t> test_rows,
                                   int num_classes);

}  // namespace refaudit
