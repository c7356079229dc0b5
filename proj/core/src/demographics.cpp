#include "refaudit/demographics.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>

#include "csv_util.hpp"
#include "refaudit/errors.hpp"

namespace refaudit {

namespace {

using csv::for_each_row;
using csv::lower;

std::uint64_t parse_count(const std::string& s, std::size_t line_no) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("first-name table: bad count '" + s + "'", line_no);
  return value;
}

}  // namespace

std::string_view to_string(Sex s) {
  switch (s) {
    case Sex::female: return "female";
    case Sex::male: return "male";
  }
  return "?";
}

std::string_view to_string(RaceEthnicity r) {
  switch (r) {
    case RaceEthnicity::white: return "white";
    case RaceEthnicity::black_african_american: return "black_african_american";
    case RaceEthnicity::asian_pacific_islander: return "asian_pacific_islander";
    case RaceEthnicity::american_indian_alaska_native:
      return "american_indian_alaska_native";
    case RaceEthnicity::two_or_more_races: return "two_or_more_races";
    case RaceEthnicity::hispanic_latino: return "hispanic_latino";
  }
  return "?";
}

std::optional<Sex> sex_from_string(std::string_view s) {
  if (s == "female") return Sex::female;
  if (s == "male") return Sex::male;
  return std::nullopt;
}

std::optional<RaceEthnicity> race_from_string(std::string_view s) {
  for (int i = 0; i < kNumRaces; ++i) {
    const auto r = static_cast<RaceEthnicity>(i);
    if (s == to_string(r)) return r;
  }
  return std::nullopt;
}

DemographicGroup DemographicGroup::from_index(int index) {
  if (index < 0 || index >= kNumGroups)
    throw std::out_of_range("DemographicGroup: index out of range");
  return DemographicGroup{static_cast<Sex>(index % kNumSexes),
                          static_cast<RaceEthnicity>(index / kNumSexes)};
}

// ---- FirstNameTable --------------------------------------------------------

FirstNameTable FirstNameTable::load(std::istream& in, std::uint64_t min_count) {
  std::array<std::map<std::string, std::uint64_t>, kNumSexes> totals;
  for_each_row(in, [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() == 3 && lower(f[0]) == "name") return;  // header row
    if (f.size() != 3)
      throw ParseError("first-name table: expected name,sex,count", line_no);
    const std::string name = lower(f[0]);
    if (name.empty()) throw ParseError("first-name table: empty name", line_no);
    Sex sex;
    const std::string sex_field = lower(f[1]);
    if (sex_field == "f")
      sex = Sex::female;
    else if (sex_field == "m")
      sex = Sex::male;
    else
      throw ParseError("first-name table: sex must be F or M, got '" + f[1] + "'",
                       line_no);
    totals[static_cast<int>(sex)][name] += parse_count(f[2], line_no);
  });

  FirstNameTable table;
  for (int s = 0; s < kNumSexes; ++s) {
    double running = 0.0;
    for (const auto& [name, count] : totals[s]) {  // map iteration: sorted by name
      if (count < min_count) continue;
      table.by_sex_[s].push_back({name, static_cast<Sex>(s), count});
      running += static_cast<double>(count);
      table.cumulative_[s].push_back(running);
    }
  }
  if (table.by_sex_[0].empty() && table.by_sex_[1].empty())
    throw ParseError("first-name table: no rows at or above the minimum count");
  return table;
}

FirstNameTable FirstNameTable::load_file(const std::string& path,
                                         std::uint64_t min_count) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open first-name table: " + path);
  return load(in, min_count);
}

std::span<const FirstNameEntry> FirstNameTable::entries(Sex sex) const {
  return by_sex_[static_cast<int>(sex)];
}

std::span<const double> FirstNameTable::cumulative(Sex sex) const {
  return cumulative_[static_cast<int>(sex)];
}

// ---- SurnameTable -----------------------------------------------------------

SurnameTable SurnameTable::load(std::istream& in) {
  SurnameTable table;
  for_each_row(in, [&](std::size_t line_no, const std::vector<std::string>& f) {
    if (f.size() == 1 + kNumRaces && lower(f[0]) == "surname") return;  // header
    if (f.size() != 1 + kNumRaces)
      throw ParseError("surname table: expected surname plus " +
                           std::to_string(kNumRaces) + " percentage columns",
                       line_no);
    SurnameEntry entry;
    entry.surname = lower(f[0]);
    if (entry.surname.empty()) throw ParseError("surname table: empty surname", line_no);
    double total = 0.0;
    for (int r = 0; r < kNumRaces; ++r) {
      const std::string& cell = f[1 + r];
      double pct = 0.0;
      if (!cell.empty() && cell != "(S)") {
        try {
          std::size_t used = 0;
          pct = std::stod(cell, &used);
          if (used != cell.size()) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw ParseError("surname table: bad percentage '" + cell + "'", line_no);
        }
        if (pct < 0.0 || pct > 100.0)
          throw ParseError("surname table: percentage out of [0, 100]", line_no);
      }
      entry.shares[r] = pct / 100.0;
      total += entry.shares[r];
    }
    if (total <= 0.0)
      throw ParseError("surname table: row has no usable share mass", line_no);
    table.entries_.push_back(std::move(entry));
  });
  if (table.entries_.empty()) throw ParseError("surname table: no rows");
  return table;
}

SurnameTable SurnameTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open surname table: " + path);
  return load(in);
}

// ---- synthesis ----------------------------------------------------------

std::string display_name(const PatronIdentity& identity) {
  std::string full = identity.first_name + " " + identity.surname;
  bool at_word_start = true;
  for (char& c : full) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '-') {
      at_word_start = true;
    } else if (at_word_start) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      at_word_start = false;
    }
  }
  return full;
}

std::string sample_first_name(const FirstNameTable& table, Sex sex, RngEngine& rng) {
  const auto entries = table.entries(sex);
  if (entries.empty())
    throw std::runtime_error(std::string("sample_first_name: no names recorded for sex ") +
                             std::string(to_string(sex)));
  const std::size_t i = weighted_index_cumulative(rng, table.cumulative(sex));
  return entries[i].name;
}

std::string sample_surname(const SurnameTable& table, RaceEthnicity race,
                           RngEngine& rng, int max_attempts) {
  if (max_attempts < 1)
    throw std::invalid_argument("sample_surname: max_attempts must be positive");
  const auto entries = table.entries();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const SurnameEntry& entry = entries[uniform_index(rng, entries.size())];
    const std::size_t label = weighted_index(rng, entry.shares);
    if (static_cast<RaceEthnicity>(label) == race) return entry.surname;
  }
  throw std::runtime_error(
      "sample_surname: no surname drawn for category '" +
      std::string(to_string(race)) + "' within " + std::to_string(max_attempts) +
      " attempts; the table may carry too little mass for it");
}

std::vector<PatronIdentity> synthesize_cohort(int n, const FirstNameTable& first_names,
                                              const SurnameTable& surnames,
                                              RngEngine& rng) {
  if (n < 0) throw std::invalid_argument("synthesize_cohort: n must be non-negative");
  const int base = n / kNumGroups;
  const int remainder = n % kNumGroups;
  std::vector<PatronIdentity> cohort;
  cohort.reserve(static_cast<std::size_t>(n));
  for (int g = 0; g < kNumGroups; ++g) {
    const DemographicGroup group = DemographicGroup::from_index(g);
    const int quota = base + (g < remainder ? 1 : 0);
    for (int i = 0; i < quota; ++i) {
      PatronIdentity identity;
      identity.group = group;
      identity.first_name = sample_first_name(first_names, group.sex, rng);
      identity.surname = sample_surname(surnames, group.race, rng);
      cohort.push_back(std::move(identity));
    }
  }
  return cohort;
}

}  // namespace refaudit
