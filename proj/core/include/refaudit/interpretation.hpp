#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/corpus.hpp"
#include "refaudit/logit_inference.hpp"

namespace refaudit {

// Effect-size gate: a term must at least double (or halve) the odds.
inline constexpr double kMinAbsCoefDefault = 0.6931471805599453;  // ln 2

// Dual-threshold decision rule for salient markers: a term counts only when
// its p-value clears the Bonferroni-adjusted significance threshold AND its
// coefficient magnitude clears the odds-doubling floor.
struct SalienceCriteria {
  double alpha = 0.05;
  int family = 1;  // number of term tests, normally the vocabulary size
  double min_abs_coef = kMinAbsCoefDefault;

  double p_threshold() const;  // alpha / family
};

struct SalientMarker {
  std::string term;
  double beta = 0.0;
  double se = 0.0;
  double p = 1.0;
  double odds_ratio = 1.0;  // exp(beta)
  // 0 = reference class (beta < 0), 1 = comparison class (beta > 0); under
  // the female=0/male=1 coding a negative beta favors female-labeled text.
  int favored_class = 0;
};

struct SalienceResult {
  std::vector<SalientMarker> markers;      // sorted by p ascending
  std::vector<std::string> suspect_terms;  // separation-flagged, never salient
};

SalienceResult salience_filter(const StatLogitFit& fit,
                               const SalienceCriteria& criteria);

double odds_ratio(double beta);

enum class GroupingKind : std::uint8_t { sex, race, group };

// Fraction of status-ok documents whose token list contains `term`, per
// group. Tokenization matches the feature pipeline but applies no masking,
// so rates reflect the raw response text.
struct PresenceRates {
  std::vector<std::string> group_names;
  std::vector<std::size_t> group_sizes;
  std::vector<std::size_t> containing;
  std::vector<double> rates;  // containing / size, 0 for empty groups
};

PresenceRates term_presence_rates(std::span<const InteractionRecord> records,
                                  std::string_view term, GroupingKind grouping);

struct VolcanoPoint {
  std::string term;
  double beta = 0.0;          // x
  double neg_log10_p = 0.0;   // y, clamped via p >= 1e-300
  bool salient = false;
};

// One point per non-suspect term, in fit order.
std::vector<VolcanoPoint> volcano_points(const StatLogitFit& fit,
                                         const SalienceCriteria& criteria);

// Per-term data file: term, beta, se, p, neg_log10_p, salient, suspect.
// Suspect terms are included here (rows carry the flag) even though the
// chart omits them.
void write_volcano_csv(const std::string& path, const StatLogitFit& fit,
                       const SalienceCriteria& criteria,
                       std::string_view fingerprint);

// Standalone vector-graphics scatter chart: dashed vertical rules at
// +/- min_abs_coef, a dashed horizontal rule at -log10(alpha/family),
// salient points enlarged and labeled. Threshold values and the
// configuration fingerprint are embedded in the document metadata.
void write_volcano_svg(const std::string& path,
                       std::span<const VolcanoPoint> points,
                       const SalienceCriteria& criteria, std::string_view title,
                       std::string_view fingerprint);

}  // namespace refaudit
