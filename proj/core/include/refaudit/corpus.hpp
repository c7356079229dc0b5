#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/demographics.hpp"
#include "refaudit/query_builder.hpp"

namespace refaudit {

enum class ResponseStatus : std::uint8_t { ok, failed };

std::string_view to_string(ResponseStatus s);

// One prompt/response exchange with full provenance. This is the JSON Lines
// row format of corpus files.
struct InteractionRecord {
  std::uint64_t run_seed = 0;  // doubles as the cross-validation fold id
  Setting setting = Setting::academic;
  std::string model_id;
  TemplateId template_id = TemplateId::subject;
  std::string institution;  // display name only
  PatronIdentity identity;
  std::string system_text;
  std::string user_text;
  std::string response_text;  // empty when status == failed
  ResponseStatus status = ResponseStatus::ok;
  std::string failure_reason;  // empty when status == ok
  std::string created_at;      // ISO-8601 UTC
};

// Timestamp written by the deterministic synthetic sources, so same-seed
// runs are byte-identical. The remote source stamps wall-clock time.
inline constexpr std::string_view kEpochTimestamp = "1970-01-01T00:00:00Z";

std::string utc_timestamp_now();

std::string to_json_line(const InteractionRecord& record);
InteractionRecord record_from_json(std::string_view line, std::size_t line_no = 0);

// Appends records to a JSON Lines file (created if missing); returns the
// number written. Throws on I/O failure.
std::size_t append_records(const std::string& path,
                           std::span<const InteractionRecord> records);

struct LoadOptions {
  // Strict mode (default) throws ParseError naming the first bad line;
  // lenient mode skips bad lines and counts them.
  bool lenient = false;
};

struct LoadResult {
  std::vector<InteractionRecord> records;
  std::size_t skipped_lines = 0;
};

LoadResult load_corpus(const std::string& path, LoadOptions options = {});

std::vector<InteractionRecord> filter_ok(std::span<const InteractionRecord> records);

// Design-balance summary of a corpus slice.
struct BalanceStats {
  std::size_t total = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::array<std::size_t, kNumGroups> per_group{};
  std::array<std::size_t, kNumSexes> per_sex{};
  std::array<std::size_t, kNumRaces> per_race{};
  std::map<TemplateId, std::size_t> per_template;
  std::map<std::uint64_t, std::size_t> per_fold;
};

BalanceStats compute_balance(std::span<const InteractionRecord> records);
std::string format_balance(const BalanceStats& stats);

// ---- cohort / plan persistence -------------------------------------------

struct CohortRow {
  std::uint64_t run_seed = 0;
  PatronIdentity identity;
};

struct PlannedInteraction {
  std::uint64_t run_seed = 0;
  PlanItem item;
};

void write_cohort(const std::string& path, std::span<const CohortRow> rows);
std::vector<CohortRow> load_cohort(const std::string& path);

// Plan rows are self-contained (template body included), so a stored plan
// can be generated against without access to the original template pool.
void write_plan(const std::string& path, std::span<const PlannedInteraction> rows);
std::vector<PlannedInteraction> load_plan(const std::string& path);

}  // namespace refaudit
