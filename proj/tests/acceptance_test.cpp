// Acceptance gate for the audit toolkit. Nine go/no-go criteria covering
// detection power on a corpus with a known planted disparity, false-positive
// calibration on identity-blind corpora, the numeric kernels against frozen
// worked examples and an independent solver, demographic sampling statistics,
// and byte-level determinism of the whole pipeline. Prints exactly one
// verdict line per criterion and exits nonzero if any of them fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "refaudit/audit.hpp"
#include "refaudit/stats.hpp"
#include "test_support.hpp"

using namespace refaudit;

namespace {

struct verdict {
  bool pass = false;
  std::string details;
};

std::string fmt(const char* pattern, ...) {
  va_list args;
  va_start(args, pattern);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

bool close_rel(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

AuditConfig base_config() {
  AuditConfig config;
  config.data_dir = test_support::data_dir();
  return config;
}

double best_margin(const AuditOutcome& outcome, AuditTarget target) {
  double best = -1.0;
  for (const MarginResult& m : outcome.margins)
    if (m.target == target) best = std::max(best, m.mean_margin);
  return best;
}

// --- criterion 1: a planted salutation disparity must be found ------------

verdict detection_power(const DataTables& tables) {
  const auto start = std::chrono::steady_clock::now();
  const int runs = 20;
  int flagged = 0;
  int dear_attributed = 0;
  double best_margin_sum = 0.0;

  for (int r = 0; r < runs; ++r) {
    AuditConfig config = base_config();
    config.generator = GeneratorKind::injected;
    config.model_id = "synthetic-injected";
    config.injected_marker = "dear";
    config.injected_female_rate = 0.662;
    config.injected_male_rate = 0.484;
    config.per_seed = 500;
    config.seeds.clear();
    for (std::uint64_t k = 1; k <= 5; ++k)
      config.seeds.push_back(1000ull * (r + 1) + k);

    const PlanBundle bundle = build_plan(config, tables);
    const auto corpus = generate_corpus(config, bundle.plan);
    const AuditOutcome outcome = run_audit(config, corpus);

    best_margin_sum += best_margin(outcome, AuditTarget::sex);
    if (!target_significant(outcome.margins, AuditTarget::sex)) continue;
    ++flagged;

    // the flag must come with the right attribution: stage 2 names the
    // marker and points it at the female-labeled class
    bool found = false;
    if (outcome.sex_stage2.ran && !outcome.sex_stage2.fits.empty()) {
      for (const SalientMarker& m :
           outcome.sex_stage2.fits.front().salience.markers)
        if (m.term == "dear" && m.beta < 0.0) found = true;
    }
    if (found) ++dear_attributed;
  }

  const double elapsed = seconds_since(start);
  const double mean_best = best_margin_sum / runs;
  const bool pass = flagged >= 19 && dear_attributed == flagged &&
                    mean_best > 0.02 && elapsed < 300.0;
  return {pass, fmt("flagged %d/%d runs, marker attributed in %d, "
                    "mean best sex margin %.2fpp, %.1fs",
                    flagged, runs, dear_attributed, mean_best * 100.0,
                    elapsed)};
}

// --- criterion 2: identity-blind corpora must stay quiet ------------------

verdict null_calibration(const DataTables& tables) {
  const auto start = std::chrono::steady_clock::now();
  const int runs = 20;
  int noisy = 0;
  double worst_race_margin = 0.0;

  for (int r = 0; r < runs; ++r) {
    AuditConfig config = base_config();
    config.generator = GeneratorKind::null_replies;
    config.per_seed = 500;
    config.seeds.clear();
    for (std::uint64_t k = 1; k <= 5; ++k)
      config.seeds.push_back(50000ull + 1000ull * r + k);

    const PlanBundle bundle = build_plan(config, tables);
    const auto corpus = generate_corpus(config, bundle.plan);
    const AuditOutcome outcome = run_audit(config, corpus);

    if (target_significant(outcome.margins, AuditTarget::sex) ||
        target_significant(outcome.margins, AuditTarget::race))
      ++noisy;
    for (const MarginResult& m : outcome.margins)
      if (m.target == AuditTarget::race)
        worst_race_margin = std::max(worst_race_margin, std::abs(m.mean_margin));
  }

  const double elapsed = seconds_since(start);
  const bool pass =
      noisy <= 2 && worst_race_margin <= 0.03 && elapsed < 300.0;
  return {pass, fmt("%d/%d runs with any significant result, worst race "
                    "margin %.2fpp, %.1fs",
                    noisy, runs, worst_race_margin * 100.0, elapsed)};
}

// --- criterion 3: tf-idf worked example ------------------------------------

verdict tfidf_example() {
  const std::vector<std::vector<std::string>> docs = {
      {"cat", "cat", "dog"}, {"dog", "bird"}, {"bird", "bird", "bird"}};
  const Vocabulary vocab({"cat", "dog", "bird"});
  const TfIdfMatrix m = transform(docs, vocab);

  // document 1 by hand: cat 2*(ln(4/2)+1), dog 1*(ln(4/3)+1), bird absent
  const double cat_raw = 2.0 * (std::log(4.0 / 2.0) + 1.0);
  const double dog_raw = 1.0 * (std::log(4.0 / 3.0) + 1.0);
  const double norm = std::hypot(cat_raw, dog_raw);

  const bool raw_ok = std::abs(cat_raw - 3.3863) < 1e-4 &&
                      std::abs(dog_raw - 1.2877) < 1e-4;
  const bool row_ok = std::abs(m.at(0, 0) - 0.9346) < 1e-4 &&
                      std::abs(m.at(0, 1) - 0.3554) < 1e-4 &&
                      m.at(0, 2) == 0.0;
  const bool exact_ok = std::abs(m.at(0, 0) - cat_raw / norm) < 1e-12 &&
                        std::abs(m.at(0, 1) - dog_raw / norm) < 1e-12;

  return {raw_ok && row_ok && exact_ok,
          fmt("weights (%.4f, %.4f), normalized row (%.4f, %.4f, %.4f)",
              cat_raw, dog_raw, m.at(0, 0), m.at(0, 1), m.at(0, 2))};
}

// --- criterion 4: one-sample t test ----------------------------------------

verdict t_test_example() {
  const std::vector<double> accuracies = {0.52, 0.54, 0.51, 0.53, 0.55};
  const TTestResult r = one_sample_t_test(accuracies, 0.50);
  const bool pass = std::abs(r.t_stat - 4.2426) < 1e-3 &&
                    std::abs(r.p_value - 0.0132) < 5e-4 && r.df == 4;
  return {pass,
          fmt("t = %.4f, p = %.4f, df = %d", r.t_stat, r.p_value, r.df)};
}

// --- criterion 5: multiple-comparison threshold -----------------------------

verdict bonferroni_example() {
  const double threshold = bonferroni_threshold(0.05, 9);
  const std::string rendered = fmt("%.7f", threshold);
  const std::string sex = format_chance(chance_level(AuditTarget::sex));
  const std::string race = format_chance(chance_level(AuditTarget::race));
  const bool pass = threshold == 0.05 / 9.0 && rendered == "0.0055556" &&
                    sex == "50.00%" && race == "16.67%";
  return {pass, fmt("alpha/9 = %s, chance rendered %s / %s", rendered.c_str(),
                    sex.c_str(), race.c_str())};
}

// --- criterion 6: logit kernel vs an independent solver ---------------------

verdict logit_agreement() {
  double worst_coef = 0.0;
  double worst_grad = 0.0;
  bool pass = true;

  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 80 + 12 * static_cast<std::size_t>(i);
    const std::size_t p = 2 + static_cast<std::size_t>(i % 9);
    const auto problem =
        test_support::make_logit_problem(3000 + i, n, p);
    const StatLogitFit fit =
        fit_unpenalized_logit(problem.features, problem.labels, problem.terms);
    const auto ref =
        test_support::newton_logit_reference(problem.features, problem.labels);
    if (!fit.converged || !ref.converged) {
      pass = false;
      continue;
    }
    worst_coef = std::max(worst_coef, std::abs(fit.intercept - ref.coef[0]));
    worst_coef =
        std::max(worst_coef, std::abs(fit.intercept_se - ref.se[0]));
    for (std::size_t j = 0; j < fit.beta.size(); ++j) {
      worst_coef = std::max(worst_coef, std::abs(fit.beta[j] - ref.coef[j + 1]));
      worst_coef = std::max(worst_coef, std::abs(fit.se[j] - ref.se[j + 1]));
      if (!close_rel(fit.beta[j], ref.coef[j + 1], 1e-6) ||
          !close_rel(fit.se[j], ref.se[j + 1], 1e-6))
        pass = false;
    }
    if (!close_rel(fit.intercept, ref.coef[0], 1e-6) ||
        !close_rel(fit.intercept_se, ref.se[0], 1e-6))
      pass = false;
  }

  // the classifier objective's analytic gradient against central differences
  TfIdfMatrix m;
  m.rows = 30;
  m.cols = 6;
  auto rng = make_rng(9001);
  std::vector<int> labels(m.rows);
  std::vector<std::size_t> rows(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    rows[r] = r;
    labels[r] = static_cast<int>(uniform_index(rng, 3));
    for (std::size_t c = 0; c < m.cols; ++c)
      m.values.push_back(uniform_real(rng) < 0.4 ? 0.0 : uniform_real(rng));
  }
  const SoftmaxObjective objective(m, labels, rows, 3, 0.5);
  std::vector<double> w(objective.dim());
  for (double& wk : w) wk = 0.3 * standard_normal(rng);
  std::vector<double> grad(w.size());
  objective.value_and_gradient(w, grad);
  const double h = 1e-5;
  for (std::size_t k = 0; k < w.size(); ++k) {
    std::vector<double> lo = w, hi = w;
    lo[k] -= h;
    hi[k] += h;
    const double fd = (objective.value(hi) - objective.value(lo)) / (2.0 * h);
    const double err = std::abs(grad[k] - fd) / std::max(1.0, std::abs(fd));
    worst_grad = std::max(worst_grad, err);
    if (err > 1e-4) pass = false;
  }

  return {pass, fmt("10 fits, worst |coef or se delta| %.2e; worst gradient "
                    "error %.2e",
                    worst_coef, worst_grad)};
}

// --- criterion 7: odds-ratio anchor -----------------------------------------

verdict odds_ratio_anchor() {
  const double r = odds_ratio(-7.91);
  const bool pass = r > 3.6e-4 && r < 3.7e-4;
  return {pass, fmt("odds_ratio(-7.91) = %.6e", r)};
}

// --- criterion 8: demographic sampling statistics ----------------------------

verdict sampling_statistics(const DataTables& tables) {
  bool pass = true;
  std::string detail;

  // first-name draws match the recorded frequencies (goodness of fit at 1%)
  double worst_ratio = 0.0;
  for (Sex sex : {Sex::female, Sex::male}) {
    const auto entries = tables.first_names.entries(sex);
    std::unordered_map<std::string, std::size_t> position;
    std::vector<double> probs(entries.size());
    double total = 0.0;
    for (const FirstNameEntry& e : entries) total += e.count;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      position[entries[i].name] = i;
      probs[i] = entries[i].count / total;
    }
    std::vector<std::size_t> observed(entries.size(), 0);
    auto rng = make_rng(sex == Sex::female ? 881 : 882);
    for (int d = 0; d < 50000; ++d)
      ++observed[position.at(sample_first_name(tables.first_names, sex, rng))];
    const double stat = stats::chi_squared_gof(observed, probs);
    const double cut =
        stats::chi_squared_ppf(0.99, static_cast<double>(entries.size() - 1));
    worst_ratio = std::max(worst_ratio, stat / cut);
    if (stat >= cut) pass = false;
  }
  detail += fmt("gof stat/cutoff worst %.2f", worst_ratio);

  // rejection-sampled surnames always carry mass for the requested label
  std::unordered_map<std::string, const SurnameEntry*> by_name;
  for (const SurnameEntry& e : tables.surnames.entries()) by_name[e.surname] = &e;
  auto rng = make_rng(883);
  bool shares_ok = true;
  for (int d = 0; d < 10000; ++d) {
    const auto race = static_cast<RaceEthnicity>(d % kNumRaces);
    const std::string name = sample_surname(tables.surnames, race, rng);
    const SurnameEntry* entry = by_name.at(name);
    if (entry->shares[static_cast<std::size_t>(race)] <= 0.0) shares_ok = false;
  }
  if (!shares_ok) pass = false;
  detail += fmt("; 10000 surname draws %s", shares_ok ? "all consistent"
                                                      : "INCONSISTENT");

  // cohort synthesis balances the 12 groups to within one member
  int worst_spread = 0;
  for (int n : {12, 24, 25, 59, 180}) {
    auto cohort_rng = make_rng(884);
    const auto cohort =
        synthesize_cohort(n, tables.first_names, tables.surnames, cohort_rng);
    std::map<int, int> counts;
    for (const PatronIdentity& id : cohort) ++counts[id.group.index()];
    int lo = n, hi = 0;
    for (int g = 0; g < 12; ++g) {
      const int c = counts.count(g) ? counts[g] : 0;
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    worst_spread = std::max(worst_spread, hi - lo);
    if (static_cast<int>(cohort.size()) != n || hi - lo > 1) pass = false;
  }
  detail += fmt("; cohort spread <= %d", worst_spread);

  return {pass, detail};
}

// --- criterion 9: determinism and round-trip ---------------------------------

verdict determinism(const DataTables& tables) {
  AuditConfig config = base_config();
  config.generator = GeneratorKind::injected;
  config.model_id = "synthetic-injected";
  config.seeds = {1, 2};
  config.per_seed = 500;

  test_support::scratch_dir dir("acceptance-det");

  std::vector<std::string> corpus_bytes;
  std::vector<std::string> margin_bytes;
  std::vector<std::vector<InteractionRecord>> corpora;
  for (int round = 0; round < 2; ++round) {
    const PlanBundle bundle = build_plan(config, tables);
    auto corpus = generate_corpus(config, bundle.plan);
    std::string joined;
    for (const InteractionRecord& r : corpus) {
      joined += to_json_line(r);
      joined += '\n';
    }
    corpus_bytes.push_back(std::move(joined));

    const AuditOutcome outcome = run_audit(config, corpus);
    const std::string path = dir.file(fmt("margins%d.csv", round));
    write_margins_csv(path, outcome.margins, outcome.fingerprint);
    margin_bytes.push_back(test_support::slurp(path));
    corpora.push_back(std::move(corpus));
  }

  const bool corpus_same = corpus_bytes[0] == corpus_bytes[1];
  const bool margins_same = margin_bytes[0] == margin_bytes[1];

  // serialization round-trips every one of the 1000 records exactly:
  // parse each line back and re-serialize to the same bytes
  bool roundtrip = corpora[0].size() == 1000;
  for (const InteractionRecord& r : corpora[0]) {
    const std::string line = to_json_line(r);
    if (to_json_line(record_from_json(line)) != line) roundtrip = false;
  }

  const bool pass = corpus_same && margins_same && roundtrip;
  return {pass, fmt("corpus bytes %s, margins csv %s, %zu records "
                    "round-tripped %s",
                    corpus_same ? "identical" : "DIFFER",
                    margins_same ? "identical" : "DIFFER", corpora[0].size(),
                    roundtrip ? "exactly" : "WITH LOSS")};
}

void report(int number, const char* label, const verdict& v, bool& all_pass) {
  std::printf("criterion %d (%s): %s (%s)\n", number, label,
              v.pass ? "PASS" : "FAIL", v.details.c_str());
  std::fflush(stdout);
  all_pass = all_pass && v.pass;
}

}  // namespace

int main() {
  const AuditConfig config = base_config();
  const DataTables tables = load_data_tables(config);

  bool all_pass = true;
  report(1, "injected-marker detection power", detection_power(tables),
         all_pass);
  report(2, "null-corpus calibration", null_calibration(tables), all_pass);
  report(3, "tf-idf worked example", tfidf_example(), all_pass);
  report(4, "one-sample t test", t_test_example(), all_pass);
  report(5, "multiple-comparison threshold", bonferroni_example(), all_pass);
  report(6, "logit agreement with a direct solver", logit_agreement(),
         all_pass);
  report(7, "odds-ratio anchor", odds_ratio_anchor(), all_pass);
  report(8, "demographic sampling statistics", sampling_statistics(tables),
         all_pass);
  report(9, "determinism and round-trip", determinism(tables), all_pass);

  if (!all_pass) {
    std::printf("acceptance: FAIL\n");
    return 1;
  }
  std::printf("acceptance: PASS\n");
  return 0;
}
