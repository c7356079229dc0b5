#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/classifiers.hpp"
#include "refaudit/corpus.hpp"
#include "refaudit/text_features.hpp"

namespace refaudit {

// What the diagnostic classifiers try to recover from the response text.
enum class AuditTarget : std::uint8_t { sex, race };

std::string_view to_string(AuditTarget target);
std::optional<AuditTarget> audit_target_from_string(std::string_view s);

inline int num_classes_of(AuditTarget target) {
  return target == AuditTarget::sex ? kNumSexes : kNumRaces;
}
inline double chance_level(AuditTarget target) {
  return 1.0 / num_classes_of(target);
}

// Cross-validation folds keyed by run seed: every record generated under one
// seed lands in the same fold, so held-out folds are whole experimental runs.
struct FoldAssignment {
  std::vector<std::uint64_t> fold_seeds;  // ascending; fold f <-> fold_seeds[f]
  std::vector<std::size_t> row_fold;      // per corpus row, index into fold_seeds

  std::size_t fold_count() const { return fold_seeds.size(); }
  std::vector<std::size_t> rows_in_fold(std::size_t fold) const;
  std::vector<std::size_t> rows_outside_fold(std::size_t fold) const;
};

// Throws std::invalid_argument if the corpus has fewer than two distinct
// run seeds (no held-out fold possible).
FoldAssignment split_by_seed(std::span<const InteractionRecord> records);

// Every fold must contain every class, otherwise some training split or
// held-out evaluation is degenerate. Throws naming the fold seed and the
// missing class.
void check_fold_class_coverage(const FoldAssignment& folds,
                               std::span<const int> labels,
                               std::span<const std::string> class_names);

// Trains on the complement of each fold and scores the held-out fold.
// Returns one accuracy per fold, in fold order. The label alphabet is
// class_names: labels index into it, and its size is the class count.
std::vector<double> cross_validate(const ClassifierSpec& spec,
                                   const TfIdfMatrix& features,
                                   std::span<const int> labels,
                                   const FoldAssignment& folds,
                                   std::span<const std::string> class_names);

struct TTestResult {
  double mean = 0.0;
  double sample_std = 0.0;
  double t_stat = 0.0;
  int df = 0;
  double p_value = 1.0;
  // Zero sample variance: p is 0 when the mean differs from the reference
  // and 1 otherwise, t_stat is left at 0, and this flag is set.
  bool degenerate = false;
};

// Two-sided one-sample t-test of `values` against `reference`.
// Requires at least two values.
TTestResult one_sample_t_test(std::span<const double> values, double reference);

// alpha / family_size; family_size must be >= 1.
double bonferroni_threshold(double alpha, int family_size);

// Chance baseline as it appears in reports: "50.00%" for two classes,
// "16.67%" for six.
std::string format_chance(double chance);

// Two-sided critical value of Student's t: P(|T| <= result) = level.
double t_critical(double level, int df);

struct MarginResult {
  std::string setting;          // "academic" or "public"
  AuditTarget target = AuditTarget::sex;
  ClassifierKind classifier = ClassifierKind::logistic_regression_l2;
  std::vector<double> fold_accuracies;
  double chance = 0.5;
  double mean_accuracy = 0.0;
  double mean_margin = 0.0;     // mean_accuracy - chance
  double ci95_low = 0.0;        // on the accuracy scale
  double ci95_high = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  double alpha_adjusted = 0.0;
  bool significant = false;     // p_value < alpha_adjusted
  bool degenerate = false;
};

// Cross-validates one classifier on one target and tests the fold accuracies
// against chance at the Bonferroni-adjusted threshold.
MarginResult compute_margin(std::string setting, AuditTarget target,
                            const ClassifierSpec& spec,
                            const TfIdfMatrix& features,
                            std::span<const int> labels,
                            const FoldAssignment& folds,
                            double alpha_adjusted,
                            std::span<const std::string> class_names);

// Aligned text table, one row per result; margins are percentage points to
// two decimals with a trailing '*' iff significant. Empty input renders the
// header alone.
std::string build_margin_table(std::span<const MarginResult> results);

// CSV with fold-level accuracies, t, p, adjusted alpha, and the
// configuration fingerprint on every row.
void write_margins_csv(const std::string& path,
                       std::span<const MarginResult> results,
                       std::string_view fingerprint);
std::vector<MarginResult> load_margins_csv(const std::string& path);

}  // namespace refaudit
