#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "csv_util.hpp"
#include "refaudit/audit.hpp"
#include "refaudit/errors.hpp"
#include "refaudit/rng.hpp"

namespace refaudit {

namespace {

using nlohmann::json;

// Derivation streams: every random decision of a run pulls from a generator
// derived from (run_seed, stream), so results do not depend on evaluation
// order or concurrency.
constexpr std::uint64_t kStreamCohort = 1;
constexpr std::uint64_t kStreamPlan = 2;
constexpr std::uint64_t kStreamGenerate = 0x10000;  // + plan row index

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::uint64_t parse_u64(std::string_view value, std::string_view key) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw std::invalid_argument("config key '" + std::string(key) +
                                "': expected unsigned integer, got '" +
                                std::string(value) + "'");
  return out;
}

int parse_int(std::string_view value, std::string_view key) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw std::invalid_argument("config key '" + std::string(key) +
                                "': expected integer, got '" + std::string(value) +
                                "'");
  return out;
}

double parse_double(std::string_view value, std::string_view key) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(value), &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return out;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + std::string(key) +
                                "': expected number, got '" + std::string(value) +
                                "'");
  }
}

bool parse_bool(std::string_view value, std::string_view key) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off")
    return false;
  throw std::invalid_argument("config key '" + std::string(key) +
                              "': expected boolean, got '" + std::string(value) +
                              "'");
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const std::size_t next = value.find(',', pos);
    const std::string_view piece =
        value.substr(pos, next == std::string_view::npos ? next : next - pos);
    const std::string trimmed = csv::trim(std::string(piece));
    if (!trimmed.empty()) out.push_back(trimmed);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

std::string join_u64(std::span<const std::uint64_t> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::string join_strings(std::span<const std::string> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += values[i];
  }
  return out;
}

// Columns numerically inside the span of the intercept and earlier columns.
// Keeping them would make the stage-2 information matrix exactly singular.
// Fixed reply structure produces such dependencies routinely — e.g. two
// salutation tokens that partition the corpus sum (after idf scaling) to the
// column of any token present in every reply. Modified Gram-Schmidt with a
// re-orthogonalization pass, intercept first, finds every such column; the
// later-ranked member of each dependent set is reported, mirroring how R
// marks aliased coefficients.
std::vector<std::size_t> aliased_columns(const TfIdfMatrix& x) {
  const std::size_t n = x.rows;
  std::vector<std::vector<double>> basis;  // orthonormal columns so far
  basis.emplace_back(n, 1.0 / std::sqrt(static_cast<double>(n)));

  std::vector<std::size_t> drop;
  std::vector<double> v(n);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double orig_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = x.values[i * x.cols + j];
      orig_sq += v[i] * v[i];
    }
    if (orig_sq == 0.0) {  // term never fires: aliased to nothing at all
      drop.push_back(j);
      continue;
    }
    for (int pass = 0; pass < 2; ++pass) {
      for (const std::vector<double>& b : basis) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += b[i] * v[i];
        for (std::size_t i = 0; i < n; ++i) v[i] -= dot * b[i];
      }
    }
    double res_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) res_sq += v[i] * v[i];
    if (res_sq <= 1e-16 * orig_sq) {  // residual below 1e-8 of column norm
      drop.push_back(j);
      continue;
    }
    const double inv = 1.0 / std::sqrt(res_sq);
    for (std::size_t i = 0; i < n; ++i) v[i] *= inv;
    basis.push_back(v);
  }
  return drop;
}

// `drop` comes from aliased_columns(features); the caller computes it once
// because the same design matrix backs the sex fit and all six race fits.
StageTwoFit fit_stage_two(std::string comparison, const TfIdfMatrix& features,
                          std::span<const int> labels,
                          std::span<const std::string> terms,
                          const SalienceCriteria& criteria,
                          const std::vector<std::size_t>& drop) {
  StageTwoFit out;
  out.comparison = std::move(comparison);

  if (drop.empty()) {
    out.fit = fit_unpenalized_logit(features, labels, terms);
  } else {
    std::vector<bool> is_dropped(features.cols, false);
    for (std::size_t j : drop) {
      is_dropped[j] = true;
      out.aliased_terms.push_back(terms[j]);
    }
    std::vector<std::string> kept_terms;
    std::vector<std::size_t> kept_cols;
    for (std::size_t j = 0; j < features.cols; ++j)
      if (!is_dropped[j]) {
        kept_terms.push_back(terms[j]);
        kept_cols.push_back(j);
      }
    TfIdfMatrix reduced;
    reduced.rows = features.rows;
    reduced.cols = kept_cols.size();
    reduced.values.resize(reduced.rows * reduced.cols);
    for (std::size_t i = 0; i < reduced.rows; ++i)
      for (std::size_t c = 0; c < kept_cols.size(); ++c)
        reduced.values[i * reduced.cols + c] =
            features.values[i * features.cols + kept_cols[c]];
    out.fit = fit_unpenalized_logit(reduced, labels, kept_terms);
  }
  out.salience = salience_filter(out.fit, criteria);
  return out;
}

std::vector<std::string> sex_class_names() { return {"female", "male"}; }

std::vector<std::string> race_class_names() {
  std::vector<std::string> names;
  for (int r = 0; r < kNumRaces; ++r)
    names.emplace_back(to_string(static_cast<RaceEthnicity>(r)));
  return names;
}

std::string verdict_line(bool significant, int n_significant) {
  if (!significant) return "no detectable systematic differentiation under the tested conditions";
  return "systematic differentiation detected (" + std::to_string(n_significant) +
         " of 3 classifiers significant)";
}

int count_significant(std::span<const MarginResult> margins, AuditTarget target) {
  int n = 0;
  for (const MarginResult& m : margins)
    if (m.target == target && m.significant) ++n;
  return n;
}

std::string percent(double rate) { return fmt("%.1f", rate * 100.0) + "%"; }

void render_stage_two(std::ostringstream& out, const StageTwoReport& stage,
                      const SalienceCriteria& criteria,
                      std::span<const InteractionRecord> ok_records) {
  out << "stage 2: salient markers (" << to_string(stage.target) << ")\n";
  out << "--------------------------------\n";
  if (!stage.ran) {
    out << "not applicable (stage 1 at chance)\n\n";
    return;
  }
  if (stage.forced)
    out << "note: stage 1 was at chance; stage 2 forced by configuration override\n";
  out << "decision rule: p < " << fmt("%.6g", criteria.p_threshold())
      << " (alpha " << fmt("%.4g", criteria.alpha) << " over "
      << criteria.family << " terms) and |beta| >= "
      << fmt("%.4f", criteria.min_abs_coef) << "\n";
  const GroupingKind grouping = stage.target == AuditTarget::sex
                                    ? GroupingKind::sex
                                    : GroupingKind::race;
  for (const StageTwoFit& f : stage.fits) {
    out << "\nfit: " << f.comparison << " — "
        << (f.fit.converged ? "converged" : "did not converge") << " after "
        << f.fit.iterations << " iterations, deviance "
        << fmt("%.4f", f.fit.deviance) << "\n";
    if (!f.aliased_terms.empty())
      out << "  aliased columns excluded from this fit: "
          << join_strings(f.aliased_terms) << "\n";
    if (f.salience.markers.empty()) {
      out << "  no terms meet both significance and effect-size thresholds\n";
    } else {
      for (const SalientMarker& m : f.salience.markers) {
        out << "  '" << m.term << "'  beta=" << fmt("%.4f", m.beta)
            << "  se=" << fmt("%.4f", m.se) << "  p=" << fmt("%.4g", m.p)
            << "  odds_ratio=" << fmt("%.5g", m.odds_ratio) << "  favors class "
            << m.favored_class << " of (" << f.comparison << ")\n";
        const PresenceRates rates =
            term_presence_rates(ok_records, m.term, grouping);
        out << "    presence:";
        for (std::size_t g = 0; g < rates.group_names.size(); ++g)
          out << " " << rates.group_names[g] << " " << percent(rates.rates[g])
              << " (" << rates.containing[g] << "/" << rates.group_sizes[g]
              << ")";
        out << "\n";
      }
    }
    if (!f.salience.suspect_terms.empty())
      out << "  separation-suspect terms (p unreliable): "
          << join_strings(f.salience.suspect_terms) << "\n";
  }
  out << "\n";
}

std::string render_report(const AuditConfig& config, const AuditOutcome& outcome,
                          std::span<const InteractionRecord> ok_records) {
  std::ostringstream out;
  out << "reference-service fairness audit\n";
  out << "================================\n\n";
  out << "configuration fingerprint: " << outcome.fingerprint << "\n";
  out << "setting: " << to_string(config.setting) << "    model: "
      << config.model_id << "    generator: " << to_string(config.generator)
      << "\n";
  out << "seeds: " << join_u64(config.seeds) << "    planned per seed: "
      << config.per_seed << "\n";
  out << "vocabulary: " << outcome.vocabulary.size() << " terms    masking: honorifics"
      << (config.masking.mask_patron_name ? " + patron names" : "") << "\n\n";

  out << "corpus balance\n";
  out << "--------------\n";
  out << format_balance(outcome.balance) << "\n";

  out << "stage 1: diagnostic classification\n";
  out << "----------------------------------\n";
  out << "family-wise alpha " << fmt("%.4g", config.alpha) << " over "
      << config.stage1_family << " tests -> adjusted threshold "
      << fmt("%.6g", bonferroni_threshold(config.alpha, config.stage1_family))
      << "\n";
  out << "chance baselines: sex "
      << format_chance(chance_level(AuditTarget::sex)) << ", race "
      << format_chance(chance_level(AuditTarget::race)) << "\n\n";
  out << build_margin_table(outcome.margins) << "\n";

  out << "verdicts\n";
  out << "--------\n";
  out << "sex:  " << outcome.verdict_sex << "\n";
  out << "race: " << outcome.verdict_race << "\n\n";

  render_stage_two(out, outcome.sex_stage2, outcome.stage2_criteria, ok_records);
  render_stage_two(out, outcome.race_stage2, outcome.stage2_criteria, ok_records);
  return out.str();
}

}  // namespace

std::string_view to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::remote: return "remote";
    case GeneratorKind::null_replies: return "null";
    case GeneratorKind::injected: return "injected";
  }
  return "null";
}

std::optional<GeneratorKind> generator_kind_from_string(std::string_view s) {
  if (s == "remote") return GeneratorKind::remote;
  if (s == "null") return GeneratorKind::null_replies;
  if (s == "injected") return GeneratorKind::injected;
  return std::nullopt;
}

std::string AuditConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["alpha"] = fmt("%.17g", alpha);
  kv["data_dir"] = data_dir;
  kv["endpoint_url"] = remote.endpoint_url;
  kv["first_names"] = first_names_path;
  kv["force_stage2"] = force_stage2 ? "1" : "0";
  kv["gbt_max_depth"] = std::to_string(classifier.max_depth);
  kv["gbt_rounds"] = std::to_string(classifier.rounds);
  kv["gbt_shrinkage"] = fmt("%.17g", classifier.shrinkage);
  kv["generator"] = std::string(to_string(generator));
  kv["honorifics"] = join_strings(masking.honorifics);
  kv["injected_female_rate"] = fmt("%.17g", injected_female_rate);
  kv["injected_male_rate"] = fmt("%.17g", injected_male_rate);
  kv["injected_marker"] = injected_marker;
  kv["institutions"] = institutions_path;
  kv["logreg_l2"] = fmt("%.17g", classifier.l2_strength);
  kv["logreg_max_iterations"] = std::to_string(classifier.max_iterations);
  kv["logreg_tolerance"] = fmt("%.17g", classifier.tolerance);
  kv["mask_patron_name"] = masking.mask_patron_name ? "1" : "0";
  kv["max_tokens"] = std::to_string(remote.max_tokens);
  kv["mlp_batch_size"] = std::to_string(classifier.batch_size);
  kv["mlp_epochs"] = std::to_string(classifier.epochs);
  kv["mlp_hidden_width"] = std::to_string(classifier.hidden_width);
  kv["mlp_learning_rate"] = fmt("%.17g", classifier.learning_rate);
  kv["model_id"] = model_id;
  kv["per_seed"] = std::to_string(per_seed);
  kv["prompt_style"] = std::string(to_string(prompt_style));
  kv["request_seed"] =
      remote.request_seed ? std::to_string(*remote.request_seed) : "";
  kv["seeds"] = join_u64(seeds);
  kv["setting"] = std::string(to_string(setting));
  kv["short_response_vocabulary"] = std::to_string(short_response_vocabulary);
  kv["short_responses"] = short_responses ? "1" : "0";
  kv["stage1_family"] = std::to_string(stage1_family);
  kv["surnames"] = surnames_path;
  kv["temperature"] = fmt("%.17g", remote.temperature);
  kv["train_seed"] = std::to_string(classifier.train_seed);
  kv["vocabulary_size"] = std::to_string(vocabulary_size);

  std::string out;
  for (const auto& [key, value] : kv) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

std::string AuditConfig::fingerprint() const {
  const std::string text = canonical_text();
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

void validate_config(const AuditConfig& config) {
  if (config.seeds.empty())
    throw std::invalid_argument("config: at least one seed required");
  std::vector<std::uint64_t> sorted = config.seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("config: seeds must be distinct");
  if (config.per_seed < kNumGroups)
    throw std::invalid_argument(
        "config: per_seed must be at least " + std::to_string(kNumGroups) +
        " (one interaction per demographic group)");
  if (config.vocabulary_size < 1 || config.short_response_vocabulary < 1)
    throw std::invalid_argument("config: vocabulary sizes must be positive");
  if (!(config.alpha > 0.0) || !(config.alpha < 1.0))
    throw std::invalid_argument("config: alpha must lie in (0, 1)");
  if (config.stage1_family < 1)
    throw std::invalid_argument("config: stage1_family must be >= 1");
  if (config.concurrency < 1)
    throw std::invalid_argument("config: concurrency must be >= 1");
  if (config.injected_female_rate < 0.0 || config.injected_female_rate > 1.0 ||
      config.injected_male_rate < 0.0 || config.injected_male_rate > 1.0)
    throw std::invalid_argument("config: injected rates must lie in [0, 1]");
  if (config.injected_marker.empty())
    throw std::invalid_argument("config: injected_marker must be non-empty");
  if (config.generator == GeneratorKind::remote && config.remote.endpoint_url.empty())
    throw std::invalid_argument("config: remote generator requires endpoint_url");
}

void apply_config_entry(AuditConfig& config, std::string_view key,
                        std::string_view value) {
  const std::string v(value);
  if (key == "setting") {
    const auto parsed = setting_from_string(v);
    if (!parsed) throw std::invalid_argument("config: unknown setting '" + v + "'");
    config.setting = *parsed;
  } else if (key == "generator") {
    const auto parsed = generator_kind_from_string(v);
    if (!parsed)
      throw std::invalid_argument("config: unknown generator '" + v + "'");
    config.generator = *parsed;
  } else if (key == "model_id") {
    config.model_id = v;
  } else if (key == "prompt_style") {
    const auto parsed = prompt_style_from_string(v);
    if (!parsed)
      throw std::invalid_argument("config: unknown prompt_style '" + v + "'");
    config.prompt_style = *parsed;
  } else if (key == "seeds") {
    config.seeds.clear();
    for (const std::string& piece : split_list(v))
      config.seeds.push_back(parse_u64(piece, key));
    if (config.seeds.empty())
      throw std::invalid_argument("config: seeds list is empty");
  } else if (key == "per_seed") {
    config.per_seed = parse_int(v, key);
  } else if (key == "vocabulary_size") {
    config.vocabulary_size = static_cast<std::size_t>(parse_u64(v, key));
  } else if (key == "short_response_vocabulary") {
    config.short_response_vocabulary = static_cast<std::size_t>(parse_u64(v, key));
  } else if (key == "short_responses") {
    config.short_responses = parse_bool(v, key);
  } else if (key == "alpha") {
    config.alpha = parse_double(v, key);
  } else if (key == "stage1_family") {
    config.stage1_family = parse_int(v, key);
  } else if (key == "force_stage2") {
    config.force_stage2 = parse_bool(v, key);
  } else if (key == "mask_patron_name") {
    config.masking.mask_patron_name = parse_bool(v, key);
  } else if (key == "honorifics") {
    config.masking.honorifics = split_list(v);
  } else if (key == "injected_marker") {
    config.injected_marker = v;
  } else if (key == "injected_female_rate") {
    config.injected_female_rate = parse_double(v, key);
  } else if (key == "injected_male_rate") {
    config.injected_male_rate = parse_double(v, key);
  } else if (key == "train_seed") {
    config.classifier.train_seed = parse_u64(v, key);
  } else if (key == "logreg_l2") {
    config.classifier.l2_strength = parse_double(v, key);
  } else if (key == "logreg_tolerance") {
    config.classifier.tolerance = parse_double(v, key);
  } else if (key == "logreg_max_iterations") {
    config.classifier.max_iterations = parse_int(v, key);
  } else if (key == "mlp_hidden_width") {
    config.classifier.hidden_width = parse_int(v, key);
  } else if (key == "mlp_learning_rate") {
    config.classifier.learning_rate = parse_double(v, key);
  } else if (key == "mlp_epochs") {
    config.classifier.epochs = parse_int(v, key);
  } else if (key == "mlp_batch_size") {
    config.classifier.batch_size = parse_int(v, key);
  } else if (key == "gbt_rounds") {
    config.classifier.rounds = parse_int(v, key);
  } else if (key == "gbt_max_depth") {
    config.classifier.max_depth = parse_int(v, key);
  } else if (key == "gbt_shrinkage") {
    config.classifier.shrinkage = parse_double(v, key);
  } else if (key == "endpoint_url") {
    config.remote.endpoint_url = v;
  } else if (key == "temperature") {
    config.remote.temperature = parse_double(v, key);
  } else if (key == "max_tokens") {
    config.remote.max_tokens = parse_int(v, key);
  } else if (key == "request_seed") {
    if (v.empty())
      config.remote.request_seed.reset();
    else
      config.remote.request_seed = parse_u64(v, key);
  } else if (key == "timeout_ms") {
    config.remote.timeout = std::chrono::milliseconds(parse_int(v, key));
  } else if (key == "max_retries") {
    config.remote.max_retries = parse_int(v, key);
  } else if (key == "backoff_base_ms") {
    config.remote.backoff_base = std::chrono::milliseconds(parse_int(v, key));
  } else if (key == "backoff_factor") {
    config.remote.backoff_factor = parse_double(v, key);
  } else if (key == "backoff_jitter") {
    config.remote.backoff_jitter = parse_double(v, key);
  } else if (key == "bearer_token_env") {
    config.remote.bearer_token_env = v;
  } else if (key == "concurrency") {
    config.concurrency = parse_int(v, key);
  } else if (key == "data_dir") {
    config.data_dir = v;
  } else if (key == "first_names") {
    config.first_names_path = v;
  } else if (key == "surnames") {
    config.surnames_path = v;
  } else if (key == "institutions") {
    config.institutions_path = v;
  } else if (key == "output_dir") {
    config.output_dir = v;
  } else {
    throw std::invalid_argument("config: unknown key '" + std::string(key) + "'");
  }
}

AuditConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  AuditConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string trimmed = csv::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const std::size_t eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ParseError("expected 'key = value'", line_no);
    const std::string key = csv::trim(trimmed.substr(0, eq));
    const std::string value = csv::trim(trimmed.substr(eq + 1));
    try {
      apply_config_entry(config, key, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return config;
}

DataTables load_data_tables(const AuditConfig& config) {
  DataTables tables;
  const std::string first_names = config.first_names_path.empty()
                                      ? config.data_dir + "/first_names.csv"
                                      : config.first_names_path;
  const std::string surnames = config.surnames_path.empty()
                                   ? config.data_dir + "/surnames.csv"
                                   : config.surnames_path;
  const std::string institutions =
      !config.institutions_path.empty() ? config.institutions_path
      : config.setting == Setting::academic
          ? config.data_dir + "/institutions_academic.csv"
          : config.data_dir + "/institutions_public.csv";

  tables.first_names = FirstNameTable::load_file(first_names);
  tables.surnames = SurnameTable::load_file(surnames);
  const std::span<const QueryTemplate> builtin = builtin_templates(config.setting);
  tables.templates.assign(builtin.begin(), builtin.end());
  tables.institutions = load_institutions_file(institutions, config.setting);
  return tables;
}

PlanBundle build_plan(const AuditConfig& config, const DataTables& tables) {
  validate_config(config);
  PlanBundle bundle;
  bundle.cohort.reserve(config.seeds.size() * config.per_seed);
  bundle.plan.reserve(config.seeds.size() * config.per_seed);
  for (const std::uint64_t seed : config.seeds) {
    RngEngine cohort_rng = derive_rng(seed, kStreamCohort);
    const std::vector<PatronIdentity> cohort = synthesize_cohort(
        config.per_seed, tables.first_names, tables.surnames, cohort_rng);
    RngEngine plan_rng = derive_rng(seed, kStreamPlan);
    std::vector<PlanItem> items =
        plan_interactions(config.setting, cohort, tables.templates,
                          tables.institutions, plan_rng);
    for (const PatronIdentity& identity : cohort)
      bundle.cohort.push_back({seed, identity});
    for (PlanItem& item : items)
      bundle.plan.push_back({seed, std::move(item)});
  }
  return bundle;
}

std::vector<InteractionRecord> generate_corpus(
    const AuditConfig& config, std::span<const PlannedInteraction> plan) {
  validate_config(config);

  BatchOptions options;
  options.model_id = config.model_id;
  options.style = config.prompt_style;

  SourceFn source;
  int concurrency = 1;
  switch (config.generator) {
    case GeneratorKind::null_replies:
      source = [](const PromptPair& pair, const PlannedInteraction& planned,
                  std::size_t index) {
        RngEngine rng = derive_rng(planned.run_seed, kStreamGenerate + index);
        return generate_null(pair, planned.item.identity, planned.item.tmpl.id, rng);
      };
      break;
    case GeneratorKind::injected: {
      SyntheticBiasSpec spec = SyntheticBiasSpec::by_sex(
          config.injected_female_rate, config.injected_male_rate,
          config.injected_marker);
      source = [spec](const PromptPair& pair, const PlannedInteraction& planned,
                      std::size_t index) {
        RngEngine rng = derive_rng(planned.run_seed, kStreamGenerate + index);
        return generate_injected(pair, planned.item.identity, spec,
                                 planned.item.tmpl.id, rng);
      };
      break;
    }
    case GeneratorKind::remote: {
      GenerationConfig remote = config.remote;
      remote.model_id = config.model_id;
      source = [remote](const PromptPair& pair, const PlannedInteraction&,
                        std::size_t) { return generate_remote(pair, remote); };
      options.timestamp = utc_timestamp_now;
      concurrency = config.concurrency;
      break;
    }
  }
  return batch_generate(plan, source, concurrency, options);
}

bool target_significant(std::span<const MarginResult> margins, AuditTarget target) {
  return count_significant(margins, target) > 0;
}

AuditOutcome run_audit(const AuditConfig& config,
                       std::span<const InteractionRecord> corpus) {
  validate_config(config);

  AuditOutcome outcome;
  outcome.fingerprint = config.fingerprint();
  outcome.balance = compute_balance(corpus);

  const std::vector<InteractionRecord> ok = filter_ok(corpus);
  const BalanceStats ok_balance = compute_balance(ok);
  for (int g = 0; g < kNumGroups; ++g)
    if (ok_balance.per_group[static_cast<std::size_t>(g)] == 0) {
      const DemographicGroup group = DemographicGroup::from_index(g);
      throw std::runtime_error(
          "audit: demographic group " + std::string(to_string(group.race)) + "/" +
          std::string(to_string(group.sex)) + " has no successful records");
    }

  const FoldAssignment folds = split_by_seed(ok);

  std::vector<std::vector<std::string>> documents;
  documents.reserve(ok.size());
  for (const InteractionRecord& r : ok)
    documents.push_back(
        apply_masks(tokenize(r.response_text), r.identity, config.masking));

  const Vocabulary vocab = build_vocabulary(
      documents, config.effective_vocabulary(), default_stopwords());
  const TfIdfMatrix features = transform(documents, vocab);
  outcome.vocabulary = vocab.terms();

  std::vector<int> sex_labels, race_labels;
  sex_labels.reserve(ok.size());
  race_labels.reserve(ok.size());
  for (const InteractionRecord& r : ok) {
    sex_labels.push_back(static_cast<int>(r.identity.group.sex));
    race_labels.push_back(static_cast<int>(r.identity.group.race));
  }

  const double alpha_adjusted =
      bonferroni_threshold(config.alpha, config.stage1_family);
  const std::vector<std::string> sex_names = sex_class_names();
  const std::vector<std::string> race_names = race_class_names();
  const std::string setting_name(to_string(config.setting));

  constexpr ClassifierKind kKinds[] = {ClassifierKind::logistic_regression_l2,
                                       ClassifierKind::multilayer_perceptron,
                                       ClassifierKind::gradient_boosted_trees};
  for (const AuditTarget target : {AuditTarget::sex, AuditTarget::race}) {
    const bool is_sex = target == AuditTarget::sex;
    for (const ClassifierKind kind : kKinds) {
      ClassifierSpec spec = config.classifier;
      spec.kind = kind;
      outcome.margins.push_back(compute_margin(
          setting_name, target, spec, features,
          is_sex ? std::span<const int>(sex_labels) : std::span<const int>(race_labels),
          folds, alpha_adjusted, is_sex ? sex_names : race_names));
    }
  }

  outcome.stage2_criteria.alpha = config.alpha;
  outcome.stage2_criteria.family = static_cast<int>(vocab.size());
  outcome.stage2_criteria.min_abs_coef = kMinAbsCoefDefault;

  const bool sex_significant = target_significant(outcome.margins, AuditTarget::sex);
  outcome.sex_stage2.target = AuditTarget::sex;
  outcome.sex_stage2.ran = sex_significant || config.force_stage2;
  outcome.sex_stage2.forced = !sex_significant && config.force_stage2;

  const bool race_significant = target_significant(outcome.margins, AuditTarget::race);
  outcome.race_stage2.target = AuditTarget::race;
  outcome.race_stage2.ran = race_significant || config.force_stage2;
  outcome.race_stage2.forced = !race_significant && config.force_stage2;

  std::vector<std::size_t> drop;
  if (outcome.sex_stage2.ran || outcome.race_stage2.ran)
    drop = aliased_columns(features);

  if (outcome.sex_stage2.ran)
    outcome.sex_stage2.fits.push_back(fit_stage_two("male vs female", features,
                                                    sex_labels, vocab.terms(),
                                                    outcome.stage2_criteria, drop));

  if (outcome.race_stage2.ran) {
    for (int r = 0; r < kNumRaces; ++r) {
      std::vector<int> one_vs_rest(race_labels.size());
      for (std::size_t i = 0; i < race_labels.size(); ++i)
        one_vs_rest[i] = race_labels[i] == r ? 1 : 0;
      outcome.race_stage2.fits.push_back(fit_stage_two(
          std::string(to_string(static_cast<RaceEthnicity>(r))) + " vs rest",
          features, one_vs_rest, vocab.terms(), outcome.stage2_criteria, drop));
    }
  }

  outcome.verdict_sex = verdict_line(
      sex_significant, count_significant(outcome.margins, AuditTarget::sex));
  outcome.verdict_race = verdict_line(
      race_significant, count_significant(outcome.margins, AuditTarget::race));
  outcome.report_text = render_report(config, outcome, ok);
  return outcome;
}

void write_audit_artifacts(const AuditConfig& config, const AuditOutcome& outcome,
                           const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_margins_csv(dir + "/margins.csv", outcome.margins, outcome.fingerprint);

  std::ofstream report(dir + "/report.txt", std::ios::trunc);
  if (!report) throw std::runtime_error("cannot open for writing: " + dir + "/report.txt");
  report << outcome.report_text;
  if (!report) throw std::runtime_error("failed writing " + dir + "/report.txt");
  report.close();

  std::vector<std::string> artifacts = {"margins.csv", "report.txt",
                                        "run_meta.json"};
  const auto emit_volcanoes = [&](const StageTwoReport& stage) {
    if (!stage.ran) return;
    for (std::size_t i = 0; i < stage.fits.size(); ++i) {
      const StageTwoFit& f = stage.fits[i];
      std::string stem = "volcano_" + std::string(to_string(stage.target));
      if (stage.target == AuditTarget::race)
        stem += "_" + std::string(to_string(static_cast<RaceEthnicity>(i)));
      const std::string title = std::string(to_string(stage.target)) + ": " +
                                f.comparison + " (" +
                                std::string(to_string(config.setting)) + ")";
      write_volcano_csv(dir + "/" + stem + ".csv", f.fit, outcome.stage2_criteria,
                        outcome.fingerprint);
      write_volcano_svg(dir + "/" + stem + ".svg",
                        volcano_points(f.fit, outcome.stage2_criteria),
                        outcome.stage2_criteria, title, outcome.fingerprint);
      artifacts.push_back(stem + ".csv");
      artifacts.push_back(stem + ".svg");
    }
  };
  emit_volcanoes(outcome.sex_stage2);
  emit_volcanoes(outcome.race_stage2);

  json meta;
  meta["fingerprint"] = outcome.fingerprint;
  json cfg_json = json::object();
  std::istringstream cfg_lines(config.canonical_text());
  std::string cfg_line;
  while (std::getline(cfg_lines, cfg_line)) {
    const std::size_t eq = cfg_line.find('=');
    if (eq != std::string::npos)
      cfg_json[cfg_line.substr(0, eq)] = cfg_line.substr(eq + 1);
  }
  meta["config"] = cfg_json;
  std::sort(artifacts.begin(), artifacts.end());
  meta["artifacts"] = artifacts;
  meta["vocabulary"] = outcome.vocabulary;
  meta["verdicts"] = {{"sex", outcome.verdict_sex}, {"race", outcome.verdict_race}};

  std::ofstream meta_out(dir + "/run_meta.json", std::ios::trunc);
  if (!meta_out)
    throw std::runtime_error("cannot open for writing: " + dir + "/run_meta.json");
  meta_out << meta.dump(2) << '\n';
  if (!meta_out) throw std::runtime_error("failed writing " + dir + "/run_meta.json");
}

}  // namespace refaudit
