#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/classifiers.hpp"
#include "refaudit/corpus.hpp"
#include "refaudit/demographics.hpp"
#include "refaudit/diagnostics.hpp"
#include "refaudit/interpretation.hpp"
#include "refaudit/logit_inference.hpp"
#include "refaudit/query_builder.hpp"
#include "refaudit/response_source.hpp"
#include "refaudit/text_features.hpp"

namespace refaudit {

enum class GeneratorKind : std::uint8_t { remote, null_replies, injected };

std::string_view to_string(GeneratorKind kind);
std::optional<GeneratorKind> generator_kind_from_string(std::string_view s);

// Everything that shapes an audit run. The fingerprint over the canonical
// key=value rendering is embedded in all artifacts so outputs can be traced
// to their exact configuration.
struct AuditConfig {
  Setting setting = Setting::academic;
  GeneratorKind generator = GeneratorKind::null_replies;
  std::string model_id = "synthetic-null";
  PromptStyle prompt_style = PromptStyle::separate_system;

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int per_seed = 500;

  std::size_t vocabulary_size = 120;
  std::size_t short_response_vocabulary = 60;
  bool short_responses = false;  // use the reduced vocabulary

  double alpha = 0.05;
  int stage1_family = 9;  // 3 text services x 3 classifiers
  bool force_stage2 = false;

  MaskPolicy masking;

  // injected-generator knobs (marker salutation rates by sex)
  std::string injected_marker = "dear";
  double injected_female_rate = 0.662;
  double injected_male_rate = 0.484;

  // shared hyperparameters for the stage-1 classifiers (kind is set per
  // classifier when training)
  ClassifierSpec classifier;

  GenerationConfig remote;  // remote-generator transport knobs
  int concurrency = 4;      // in-flight remote requests

  std::string data_dir = "data";
  std::string first_names_path;   // override; default <data_dir>/first_names.csv
  std::string surnames_path;      // override; default <data_dir>/surnames.csv
  std::string institutions_path;  // override; default per setting
  std::string output_dir = "artifacts";

  std::size_t effective_vocabulary() const {
    return short_responses ? short_response_vocabulary : vocabulary_size;
  }

  // Sorted key=value lines covering every field that can influence results.
  // Output paths and credentials are excluded.
  std::string canonical_text() const;
  // FNV-1a 64-bit hash of canonical_text(), as 16 hex digits.
  std::string fingerprint() const;
};

// Throws std::invalid_argument describing the first violated constraint
// (duplicate seeds, per-seed count below the 12 demographic groups, ...).
void validate_config(const AuditConfig& config);

// Applies one configuration entry by key; unknown keys or unparsable values
// throw std::invalid_argument. The same keys work in config files and as
// command-line overrides.
void apply_config_entry(AuditConfig& config, std::string_view key,
                        std::string_view value);

// key = value lines; '#' comments and blank lines ignored.
AuditConfig load_config_file(const std::string& path);

// ---- pipeline stages -------------------------------------------------------

struct DataTables {
  FirstNameTable first_names;
  SurnameTable surnames;
  std::vector<QueryTemplate> templates;
  std::vector<InstitutionRecord> institutions;
};

// Loads the name/institution tables for config.setting and the built-in
// query templates.
DataTables load_data_tables(const AuditConfig& config);

struct PlanBundle {
  std::vector<CohortRow> cohort;
  std::vector<PlannedInteraction> plan;
};

// Synthesizes one balanced cohort per seed and plans one interaction per
// member. Deterministic in (config, tables).
PlanBundle build_plan(const AuditConfig& config, const DataTables& tables);

// Runs the configured generator over the plan; one record per row, in plan
// order. Synthetic generators are deterministic in (config, plan).
std::vector<InteractionRecord> generate_corpus(
    const AuditConfig& config, std::span<const PlannedInteraction> plan);

// ---- audit orchestration ----------------------------------------------------

struct StageTwoFit {
  std::string comparison;  // "male vs female", "<race> vs rest"
  StatLogitFit fit;
  SalienceResult salience;
  // Terms whose feature columns were linearly dependent on the intercept
  // and earlier columns and had to be excluded from this fit's design (an
  // unpenalized logit has no unique optimum over aliased columns).
  std::vector<std::string> aliased_terms;
};

struct StageTwoReport {
  AuditTarget target = AuditTarget::sex;
  bool ran = false;
  bool forced = false;  // ran only because of the force override
  std::vector<StageTwoFit> fits;
};

struct AuditOutcome {
  std::string fingerprint;
  BalanceStats balance;
  std::vector<std::string> vocabulary;
  SalienceCriteria stage2_criteria;
  std::vector<MarginResult> margins;  // sex rows then race rows
  StageTwoReport sex_stage2;
  StageTwoReport race_stage2;
  std::string verdict_sex;
  std::string verdict_race;
  std::string report_text;
};

bool target_significant(std::span<const MarginResult> margins, AuditTarget target);

// Filter -> features -> stage 1 (both targets) -> stage 2 where triggered
// (or forced). Throws on corpora that cannot support the protocol (fewer
// than two seeds, a demographic group with no ok records, ...).
AuditOutcome run_audit(const AuditConfig& config,
                       std::span<const InteractionRecord> corpus);

// Writes margins.csv, report.txt, volcano_<target>.{csv,svg} per stage-2
// fit, and run_meta.json into dir (created if missing).
void write_audit_artifacts(const AuditConfig& config, const AuditOutcome& outcome,
                           const std::string& dir);

}  // namespace refaudit
