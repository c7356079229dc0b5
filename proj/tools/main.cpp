// Command-line front end: synthesize cohorts/plans, generate response
// corpora, run the two-stage fairness audit, and re-render reports.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 data error,
// 3 remote generation failed for every planned interaction.

#include <algorithm>
#include <array>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refaudit/audit.hpp"
#include "refaudit/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRemoteFailure = 3;

#ifndef REFAUDIT_DEFAULT_DATA_DIR
#define REFAUDIT_DEFAULT_DATA_DIR "data"
#endif

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied in order
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "configuration file (key = value lines)")
      ->check(CLI::ExistingFile);
  cmd->add_option("-D,--set", args.overrides,
                  "override a configuration key (KEY=VALUE, repeatable)");
}

refaudit::AuditConfig resolve_config(const CommonArgs& args) {
  refaudit::AuditConfig config;
  config.data_dir = REFAUDIT_DEFAULT_DATA_DIR;
  if (!args.config_path.empty()) {
    config = refaudit::load_config_file(args.config_path);
    // A config file that sets no data_dir keeps the built-in default.
    if (config.data_dir == "data") config.data_dir = REFAUDIT_DEFAULT_DATA_DIR;
  }
  for (const std::string& entry : args.overrides) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects KEY=VALUE, got '" + entry + "'");
    refaudit::apply_config_entry(config, entry.substr(0, eq), entry.substr(eq + 1));
  }
  return config;
}

std::string group_name(int index) {
  const refaudit::DemographicGroup g = refaudit::DemographicGroup::from_index(index);
  return std::string(refaudit::to_string(g.race)) + "/" +
         std::string(refaudit::to_string(g.sex));
}

int cmd_synth(const CommonArgs& args) {
  const refaudit::AuditConfig config = resolve_config(args);
  refaudit::validate_config(config);
  const refaudit::DataTables tables = refaudit::load_data_tables(config);
  const refaudit::PlanBundle bundle = refaudit::build_plan(config, tables);

  std::filesystem::create_directories(config.output_dir);
  refaudit::write_cohort(config.output_dir + "/cohort.jsonl", bundle.cohort);
  refaudit::write_plan(config.output_dir + "/plan.jsonl", bundle.plan);

  std::array<std::size_t, refaudit::kNumGroups> per_group{};
  for (const refaudit::CohortRow& row : bundle.cohort)
    ++per_group[static_cast<std::size_t>(row.identity.group.index())];
  std::cout << "cohort: " << bundle.cohort.size() << " members over "
            << config.seeds.size() << " seed(s)\n";
  for (int g = 0; g < refaudit::kNumGroups; ++g)
    std::cout << "  " << group_name(g) << ": "
              << per_group[static_cast<std::size_t>(g)] << "\n";
  std::cout << "wrote " << config.output_dir << "/cohort.jsonl and "
            << config.output_dir << "/plan.jsonl\n";
  return kExitOk;
}

int cmd_generate(const CommonArgs& args, const std::string& plan_path_arg) {
  const refaudit::AuditConfig config = resolve_config(args);
  refaudit::validate_config(config);
  const std::string plan_path =
      plan_path_arg.empty() ? config.output_dir + "/plan.jsonl" : plan_path_arg;

  const std::vector<refaudit::PlannedInteraction> plan = refaudit::load_plan(plan_path);
  const std::vector<refaudit::InteractionRecord> records =
      refaudit::generate_corpus(config, plan);

  std::filesystem::create_directories(config.output_dir);
  refaudit::append_records(config.output_dir + "/corpus.jsonl", records);

  std::size_t ok = 0;
  for (const refaudit::InteractionRecord& r : records)
    if (r.status == refaudit::ResponseStatus::ok) ++ok;
  const std::size_t failed = records.size() - ok;
  std::cout << "generated " << records.size() << " records: " << ok << " ok, "
            << failed << " failed\n";
  std::cout << "appended to " << config.output_dir << "/corpus.jsonl\n";
  if (!records.empty() && ok == 0) {
    std::cerr << "error: every generation attempt failed\n";
    return kExitRemoteFailure;
  }
  return kExitOk;
}

int cmd_audit(const CommonArgs& args, const std::string& corpus_path_arg,
              bool lenient) {
  const refaudit::AuditConfig config = resolve_config(args);
  refaudit::validate_config(config);
  const std::string corpus_path =
      corpus_path_arg.empty() ? config.output_dir + "/corpus.jsonl" : corpus_path_arg;

  refaudit::LoadOptions options;
  options.lenient = lenient;
  const refaudit::LoadResult loaded = refaudit::load_corpus(corpus_path, options);
  if (loaded.skipped_lines > 0)
    std::cerr << "warning: skipped " << loaded.skipped_lines
              << " malformed line(s) in " << corpus_path << "\n";

  const refaudit::AuditOutcome outcome = refaudit::run_audit(config, loaded.records);
  refaudit::write_audit_artifacts(config, outcome, config.output_dir);
  std::cout << outcome.report_text;
  std::cout << "artifacts written to " << config.output_dir << "\n";
  return kExitOk;
}

int cmd_report(const std::string& dir) {
  const std::string margins_path = dir + "/margins.csv";
  if (!std::filesystem::exists(margins_path)) {
    std::cerr << "error: " << margins_path << " not found (run `refaudit audit` first)\n";
    return kExitData;
  }
  const std::vector<refaudit::MarginResult> margins =
      refaudit::load_margins_csv(margins_path);
  if (margins.empty())
    std::cerr << "warning: " << margins_path << " holds no results\n";
  std::cout << refaudit::build_margin_table(margins);

  // Marker summaries from the volcano data files, when stage 2 ran.
  std::vector<std::filesystem::path> volcano_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("volcano_", 0) == 0 && entry.path().extension() == ".csv")
      volcano_files.push_back(entry.path());
  }
  std::sort(volcano_files.begin(), volcano_files.end());
  for (const std::filesystem::path& path : volcano_files) {
    std::ifstream in(path);
    if (!in) continue;
    std::vector<std::string> salient;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (header) {  // column names on the first line
        header = false;
        continue;
      }
      std::vector<std::string> fields;
      std::size_t start = 0;
      while (start <= line.size()) {
        const std::size_t comma = line.find(',', start);
        fields.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      if (fields.size() >= 7 && fields[5] == "1")
        salient.push_back(fields[0] + " (beta=" + fields[1] + ")");
    }
    std::cout << "\n" << path.stem().string() << ": ";
    if (salient.empty()) {
      std::cout << "no salient markers\n";
    } else {
      std::cout << salient.size() << " salient marker(s)\n";
      for (const std::string& s : salient) std::cout << "  " << s << "\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairness audit toolkit for reference-service text generation"};
  app.require_subcommand(1);

  CommonArgs synth_args, generate_args, audit_args;
  std::string plan_path, corpus_path, report_dir = "artifacts";
  bool lenient = false;

  CLI::App* synth = app.add_subcommand(
      "synth", "synthesize a balanced patron cohort and interaction plan");
  add_common(synth, synth_args);

  CLI::App* generate = app.add_subcommand(
      "generate", "run the configured response generator over a plan");
  add_common(generate, generate_args);
  generate->add_option("--plan", plan_path, "plan file (default <output_dir>/plan.jsonl)");

  CLI::App* audit = app.add_subcommand(
      "audit", "run the two-stage fairness evaluation over a corpus");
  add_common(audit, audit_args);
  audit->add_option("--corpus", corpus_path,
                    "corpus file (default <output_dir>/corpus.jsonl)");
  audit->add_flag("--lenient", lenient, "skip malformed corpus lines instead of failing");

  CLI::App* report = app.add_subcommand("report", "re-render artifacts from a directory");
  report->add_option("dir", report_dir, "artifact directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // app.exit prints the message / help text; fold the library's exit
    // codes into the documented contract (0 for --help, 1 for bad usage).
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (generate->parsed()) return cmd_generate(generate_args, plan_path);
    if (audit->parsed()) return cmd_audit(audit_args, corpus_path, lenient);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const refaudit::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
