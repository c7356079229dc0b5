#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "csv_util.hpp"
#include "refaudit/diagnostics.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/stats.hpp"

namespace refaudit {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::vector<double> parse_double_list(std::string_view joined, int line_no) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= joined.size()) {
    const std::size_t next = joined.find(';', pos);
    const std::string_view piece =
        joined.substr(pos, next == std::string_view::npos ? next : next - pos);
    if (!piece.empty()) {
      try {
        out.push_back(std::stod(std::string(piece)));
      } catch (const std::exception&) {
        throw ParseError("bad fold accuracy value '" + std::string(piece) + "'",
                         line_no);
      }
    }
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

double parse_double_field(const std::string& field, const char* what, int line_no) {
  try {
    return std::stod(field);
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " value '" + field + "'", line_no);
  }
}

}  // namespace

std::string_view to_string(AuditTarget target) {
  return target == AuditTarget::sex ? "sex" : "race";
}

std::optional<AuditTarget> audit_target_from_string(std::string_view s) {
  if (s == "sex") return AuditTarget::sex;
  if (s == "race") return AuditTarget::race;
  return std::nullopt;
}

std::vector<std::size_t> FoldAssignment::rows_in_fold(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < row_fold.size(); ++i)
    if (row_fold[i] == fold) rows.push_back(i);
  return rows;
}

std::vector<std::size_t> FoldAssignment::rows_outside_fold(std::size_t fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < row_fold.size(); ++i)
    if (row_fold[i] != fold) rows.push_back(i);
  return rows;
}

FoldAssignment split_by_seed(std::span<const InteractionRecord> records) {
  FoldAssignment out;
  for (const InteractionRecord& r : records) out.fold_seeds.push_back(r.run_seed);
  std::sort(out.fold_seeds.begin(), out.fold_seeds.end());
  out.fold_seeds.erase(std::unique(out.fold_seeds.begin(), out.fold_seeds.end()),
                       out.fold_seeds.end());
  if (out.fold_seeds.size() < 2)
    throw std::invalid_argument(
        "split_by_seed: need at least two distinct run seeds, got " +
        std::to_string(out.fold_seeds.size()));
  out.row_fold.reserve(records.size());
  for (const InteractionRecord& r : records) {
    const auto it = std::lower_bound(out.fold_seeds.begin(), out.fold_seeds.end(),
                                     r.run_seed);
    out.row_fold.push_back(static_cast<std::size_t>(it - out.fold_seeds.begin()));
  }
  return out;
}

void check_fold_class_coverage(const FoldAssignment& folds,
                               std::span<const int> labels,
                               std::span<const std::string> class_names) {
  if (labels.size() != folds.row_fold.size())
    throw std::invalid_argument("check_fold_class_coverage: label count mismatch");
  const std::size_t num_classes = class_names.size();
  std::vector<std::size_t> count(folds.fold_count() * num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw std::invalid_argument("check_fold_class_coverage: label out of range");
    ++count[folds.row_fold[i] * num_classes + static_cast<std::size_t>(y)];
  }
  for (std::size_t f = 0; f < folds.fold_count(); ++f)
    for (std::size_t cls = 0; cls < num_classes; ++cls)
      if (count[f * num_classes + cls] == 0)
        throw std::runtime_error("fold for run seed " +
                                 std::to_string(folds.fold_seeds[f]) +
                                 " contains no '" + class_names[cls] + "' records");
}

std::vector<double> cross_validate(const ClassifierSpec& spec,
                                   const TfIdfMatrix& features,
                                   std::span<const int> labels,
                                   const FoldAssignment& folds,
                                   std::span<const std::string> class_names) {
  if (features.rows != folds.row_fold.size())
    throw std::invalid_argument("cross_validate: feature row count mismatch");
  check_fold_class_coverage(folds, labels, class_names);
  const int num_classes = static_cast<int>(class_names.size());

  std::vector<double> accuracies;
  accuracies.reserve(folds.fold_count());
  for (std::size_t f = 0; f < folds.fold_count(); ++f) {
    const std::vector<std::size_t> train = folds.rows_outside_fold(f);
    const std::vector<std::size_t> test = folds.rows_in_fold(f);
    const std::vector<int> preds =
        train_and_predict(spec, features, labels, train, test, num_classes);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i)
      if (preds[i] == labels[test[i]]) ++correct;
    accuracies.push_back(static_cast<double>(correct) /
                         static_cast<double>(test.size()));
  }
  return accuracies;
}

TTestResult one_sample_t_test(std::span<const double> values, double reference) {
  if (values.size() < 2)
    throw std::invalid_argument("one_sample_t_test: need at least two values");
  TTestResult r;
  r.mean = stats::mean(values);
  r.sample_std = stats::sample_std(values);
  r.df = static_cast<int>(values.size()) - 1;
  if (r.sample_std == 0.0) {
    r.degenerate = true;
    r.p_value = r.mean == reference ? 1.0 : 0.0;
    return r;
  }
  r.t_stat = (r.mean - reference) /
             (r.sample_std / std::sqrt(static_cast<double>(values.size())));
  r.p_value = stats::student_t_two_sided_p(r.t_stat, r.df);
  return r;
}

double bonferroni_threshold(double alpha, int family_size) {
  if (family_size < 1)
    throw std::invalid_argument("bonferroni_threshold: family_size must be >= 1");
  return alpha / static_cast<double>(family_size);
}

double t_critical(double level, int df) {
  return stats::student_t_ppf(0.5 * (1.0 + level), df);
}

std::string format_chance(double chance) { return fmt("%.2f%%", chance * 100.0); }

MarginResult compute_margin(std::string setting, AuditTarget target,
                            const ClassifierSpec& spec,
                            const TfIdfMatrix& features,
                            std::span<const int> labels,
                            const FoldAssignment& folds,
                            double alpha_adjusted,
                            std::span<const std::string> class_names) {
  MarginResult m;
  m.setting = std::move(setting);
  m.target = target;
  m.classifier = spec.kind;
  m.chance = chance_level(target);
  m.alpha_adjusted = alpha_adjusted;
  m.fold_accuracies = cross_validate(spec, features, labels, folds, class_names);

  const TTestResult tt = one_sample_t_test(m.fold_accuracies, m.chance);
  m.mean_accuracy = tt.mean;
  m.mean_margin = tt.mean - m.chance;
  m.t_stat = tt.t_stat;
  m.p_value = tt.p_value;
  m.degenerate = tt.degenerate;
  m.significant = m.p_value < m.alpha_adjusted;
  if (tt.degenerate) {
    m.ci95_low = m.ci95_high = tt.mean;
  } else {
    const double half = t_critical(0.95, tt.df) * tt.sample_std /
                        std::sqrt(static_cast<double>(m.fold_accuracies.size()));
    m.ci95_low = tt.mean - half;
    m.ci95_high = tt.mean + half;
  }
  return m;
}

std::string build_margin_table(std::span<const MarginResult> results) {
  std::ostringstream out;
  out << "setting    target  classifier  margin_pp          ci95_accuracy"
         "      t_stat      p_value    alpha_adj  fold_accuracies\n";
  char buf[256];
  for (const MarginResult& m : results) {
    std::string margin = fmt("%.2f", m.mean_margin * 100.0);
    margin += m.significant ? "*" : "";
    std::snprintf(buf, sizeof(buf),
                  "%-10s %-7s %-11s %9s  [%8.5f, %8.5f]  %10.4f  %11.4e  %11.4e ",
                  m.setting.c_str(), std::string(to_string(m.target)).c_str(),
                  std::string(to_string(m.classifier)).c_str(), margin.c_str(),
                  m.ci95_low, m.ci95_high, m.t_stat, m.p_value, m.alpha_adjusted);
    out << buf;
    for (std::size_t i = 0; i < m.fold_accuracies.size(); ++i)
      out << (i ? " " : "") << fmt("%.4f", m.fold_accuracies[i]);
    if (m.degenerate) out << "  (zero-variance folds)";
    out << '\n';
  }
  return out.str();
}

void write_margins_csv(const std::string& path,
                       std::span<const MarginResult> results,
                       std::string_view fingerprint) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "setting,target,classifier,chance,mean_accuracy,mean_margin,ci95_low,"
         "ci95_high,t_stat,p_value,alpha_adjusted,significant,degenerate,"
         "fold_accuracies,fingerprint\n";
  for (const MarginResult& m : results) {
    out << m.setting << ',' << to_string(m.target) << ',' << to_string(m.classifier)
        << ',' << fmt("%.17g", m.chance) << ',' << fmt("%.17g", m.mean_accuracy)
        << ',' << fmt("%.17g", m.mean_margin) << ',' << fmt("%.17g", m.ci95_low)
        << ',' << fmt("%.17g", m.ci95_high) << ',' << fmt("%.17g", m.t_stat) << ','
        << fmt("%.17g", m.p_value) << ',' << fmt("%.17g", m.alpha_adjusted) << ','
        << (m.significant ? 1 : 0) << ',' << (m.degenerate ? 1 : 0) << ',';
    for (std::size_t i = 0; i < m.fold_accuracies.size(); ++i)
      out << (i ? ";" : "") << fmt("%.17g", m.fold_accuracies[i]);
    out << ',' << fingerprint << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<MarginResult> load_margins_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<MarginResult> out;
  csv::for_each_row(in, [&](int line_no, const std::vector<std::string>& fields) {
    if (line_no == 1 && !fields.empty() && fields[0] == "setting") return;
    if (fields.size() != 15)
      throw ParseError("expected 15 fields, got " + std::to_string(fields.size()),
                       line_no);
    MarginResult m;
    m.setting = fields[0];
    const auto target = audit_target_from_string(fields[1]);
    if (!target) throw ParseError("unknown target '" + fields[1] + "'", line_no);
    m.target = *target;
    const auto kind = classifier_kind_from_string(fields[2]);
    if (!kind) throw ParseError("unknown classifier '" + fields[2] + "'", line_no);
    m.classifier = *kind;
    m.chance = parse_double_field(fields[3], "chance", line_no);
    m.mean_accuracy = parse_double_field(fields[4], "mean_accuracy", line_no);
    m.mean_margin = parse_double_field(fields[5], "mean_margin", line_no);
    m.ci95_low = parse_double_field(fields[6], "ci95_low", line_no);
    m.ci95_high = parse_double_field(fields[7], "ci95_high", line_no);
    m.t_stat = parse_double_field(fields[8], "t_stat", line_no);
    m.p_value = parse_double_field(fields[9], "p_value", line_no);
    m.alpha_adjusted = parse_double_field(fields[10], "alpha_adjusted", line_no);
    m.significant = fields[11] == "1";
    m.degenerate = fields[12] == "1";
    m.fold_accuracies = parse_double_list(fields[13], line_no);
    out.push_back(std::move(m));
  });
  return out;
}

}  // namespace refaudit
