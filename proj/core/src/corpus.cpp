#include "refaudit/corpus.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "refaudit/errors.hpp"

namespace refaudit {

using nlohmann::json;

namespace {

json identity_to_json(const PatronIdentity& id) {
  return json{{"first_name", id.first_name},
              {"surname", id.surname},
              {"sex", to_string(id.group.sex)},
              {"race", to_string(id.group.race)}};
}

PatronIdentity identity_from_json(const json& j) {
  PatronIdentity id;
  id.first_name = j.at("first_name").get<std::string>();
  id.surname = j.at("surname").get<std::string>();
  const auto sex = sex_from_string(j.at("sex").get<std::string>());
  const auto race = race_from_string(j.at("race").get<std::string>());
  if (!sex) throw std::invalid_argument("unknown sex value");
  if (!race) throw std::invalid_argument("unknown race value");
  id.group = DemographicGroup{*sex, *race};
  return id;
}

json institution_to_json(const InstitutionRecord& inst) {
  json j{{"name", inst.name}, {"setting", to_string(inst.setting)}};
  if (inst.city) j["city"] = *inst.city;
  if (inst.team) j["team"] = *inst.team;
  if (inst.collection_topic) j["collection_topic"] = *inst.collection_topic;
  return j;
}

InstitutionRecord institution_from_json(const json& j) {
  InstitutionRecord inst;
  inst.name = j.at("name").get<std::string>();
  const auto setting = setting_from_string(j.at("setting").get<std::string>());
  if (!setting) throw std::invalid_argument("unknown setting value");
  inst.setting = *setting;
  if (j.contains("city")) inst.city = j.at("city").get<std::string>();
  if (j.contains("team")) inst.team = j.at("team").get<std::string>();
  if (j.contains("collection_topic"))
    inst.collection_topic = j.at("collection_topic").get<std::string>();
  return inst;
}

Setting parse_setting(const json& j) {
  const auto s = setting_from_string(j.at("setting").get<std::string>());
  if (!s) throw std::invalid_argument("unknown setting value");
  return *s;
}

TemplateId parse_template_id(const json& j, const char* key) {
  const auto id = template_id_from_string(j.at(key).get<std::string>());
  if (!id) throw std::invalid_argument("unknown template id");
  return *id;
}

// Serializes one JSON Lines row per `fn(json&)`, one object per line.
template <typename Rows, typename Fn>
void write_jsonl(const std::string& path, const Rows& rows, Fn fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& row : rows) {
    json j;
    fn(j, row);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename Fn>
void read_jsonl(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      fn(j);
    } catch (const std::exception& e) {
      throw ParseError(std::string("bad JSON Lines row: ") + e.what(), line_no);
    }
  }
}

}  // namespace

std::string_view to_string(ResponseStatus s) {
  return s == ResponseStatus::ok ? "ok" : "failed";
}

std::string utc_timestamp_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string to_json_line(const InteractionRecord& r) {
  json j{{"run_seed", r.run_seed},
         {"setting", to_string(r.setting)},
         {"model_id", r.model_id},
         {"template_id", to_string(r.template_id)},
         {"institution", r.institution},
         {"identity", identity_to_json(r.identity)},
         {"system_text", r.system_text},
         {"user_text", r.user_text},
         {"response_text", r.response_text},
         {"status", to_string(r.status)},
         {"created_at", r.created_at}};
  if (r.status == ResponseStatus::failed) j["failure_reason"] = r.failure_reason;
  return j.dump();
}

InteractionRecord record_from_json(std::string_view line, std::size_t line_no) {
  try {
    const json j = json::parse(line);
    InteractionRecord r;
    r.run_seed = j.at("run_seed").get<std::uint64_t>();
    r.setting = parse_setting(j);
    r.model_id = j.at("model_id").get<std::string>();
    r.template_id = parse_template_id(j, "template_id");
    r.institution = j.at("institution").get<std::string>();
    r.identity = identity_from_json(j.at("identity"));
    r.system_text = j.at("system_text").get<std::string>();
    r.user_text = j.at("user_text").get<std::string>();
    r.response_text = j.at("response_text").get<std::string>();
    const std::string status = j.at("status").get<std::string>();
    if (status == "ok")
      r.status = ResponseStatus::ok;
    else if (status == "failed")
      r.status = ResponseStatus::failed;
    else
      throw std::invalid_argument("unknown status '" + status + "'");
    if (j.contains("failure_reason"))
      r.failure_reason = j.at("failure_reason").get<std::string>();
    if (r.status == ResponseStatus::failed && r.failure_reason.empty())
      throw std::invalid_argument("failed record without failure_reason");
    r.created_at = j.at("created_at").get<std::string>();
    return r;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(std::string("bad interaction record: ") + e.what(), line_no);
  }
}

std::size_t append_records(const std::string& path,
                           std::span<const InteractionRecord> records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open corpus for appending: " + path);
  for (const InteractionRecord& r : records) out << to_json_line(r) << '\n';
  if (!out) throw std::runtime_error("corpus write failed: " + path);
  return records.size();
}

LoadResult load_corpus(const std::string& path, LoadOptions options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus: " + path);
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      result.records.push_back(record_from_json(line, line_no));
    } catch (const ParseError&) {
      if (!options.lenient) throw;
      ++result.skipped_lines;
    }
  }
  return result;
}

std::vector<InteractionRecord> filter_ok(std::span<const InteractionRecord> records) {
  std::vector<InteractionRecord> ok;
  for (const InteractionRecord& r : records)
    if (r.status == ResponseStatus::ok) ok.push_back(r);
  return ok;
}

BalanceStats compute_balance(std::span<const InteractionRecord> records) {
  BalanceStats stats;
  for (const InteractionRecord& r : records) {
    ++stats.total;
    if (r.status == ResponseStatus::ok)
      ++stats.ok;
    else
      ++stats.failed;
    ++stats.per_group[r.identity.group.index()];
    ++stats.per_sex[static_cast<int>(r.identity.group.sex)];
    ++stats.per_race[static_cast<int>(r.identity.group.race)];
    ++stats.per_template[r.template_id];
    ++stats.per_fold[r.run_seed];
  }
  return stats;
}

std::string format_balance(const BalanceStats& stats) {
  std::ostringstream out;
  out << "records: " << stats.total << " (ok " << stats.ok << ", failed "
      << stats.failed << ")\n";
  out << "by sex:";
  for (int s = 0; s < kNumSexes; ++s)
    out << "  " << to_string(static_cast<Sex>(s)) << "=" << stats.per_sex[s];
  out << "\nby race:\n";
  for (int r = 0; r < kNumRaces; ++r)
    out << "  " << to_string(static_cast<RaceEthnicity>(r)) << "="
        << stats.per_race[r] << "\n";
  out << "by group:\n";
  for (int g = 0; g < kNumGroups; ++g) {
    const DemographicGroup group = DemographicGroup::from_index(g);
    out << "  " << to_string(group.race) << "/" << to_string(group.sex) << "="
        << stats.per_group[g] << "\n";
  }
  out << "by template:\n";
  for (const auto& [id, n] : stats.per_template)
    out << "  " << to_string(id) << "=" << n << "\n";
  out << "by fold:\n";
  for (const auto& [seed, n] : stats.per_fold)
    out << "  seed " << seed << "=" << n << "\n";
  return out.str();
}

// ---- cohort / plan persistence -------------------------------------------

void write_cohort(const std::string& path, std::span<const CohortRow> rows) {
  write_jsonl(path, rows, [](json& j, const CohortRow& row) {
    j = json{{"run_seed", row.run_seed}, {"identity", identity_to_json(row.identity)}};
  });
}

std::vector<CohortRow> load_cohort(const std::string& path) {
  std::vector<CohortRow> rows;
  read_jsonl(path, [&](const json& j) {
    CohortRow row;
    row.run_seed = j.at("run_seed").get<std::uint64_t>();
    row.identity = identity_from_json(j.at("identity"));
    rows.push_back(std::move(row));
  });
  return rows;
}

void write_plan(const std::string& path, std::span<const PlannedInteraction> rows) {
  write_jsonl(path, rows, [](json& j, const PlannedInteraction& row) {
    j = json{{"run_seed", row.run_seed},
             {"setting", to_string(row.item.tmpl.setting)},
             {"template_id", to_string(row.item.tmpl.id)},
             {"template_body", row.item.tmpl.body},
             {"institution", institution_to_json(row.item.institution)},
             {"identity", identity_to_json(row.item.identity)}};
  });
}

std::vector<PlannedInteraction> load_plan(const std::string& path) {
  std::vector<PlannedInteraction> rows;
  read_jsonl(path, [&](const json& j) {
    PlannedInteraction row;
    row.run_seed = j.at("run_seed").get<std::uint64_t>();
    row.item.tmpl.id = parse_template_id(j, "template_id");
    row.item.tmpl.setting = parse_setting(j);
    row.item.tmpl.body = j.at("template_body").get<std::string>();
    row.item.institution = institution_from_json(j.at("institution"));
    row.item.identity = identity_from_json(j.at("identity"));
    rows.push_back(std::move(row));
  });
  return rows;
}

}  // namespace refaudit
