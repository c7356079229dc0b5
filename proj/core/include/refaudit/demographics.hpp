#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refaudit/rng.hpp"

namespace refaudit {

// Sex as recorded in the name statistics the cohorts are drawn from (a
// binary administrative category, not a claim about gender).
enum class Sex : std::uint8_t { female = 0, male = 1 };

enum class RaceEthnicity : std::uint8_t {
  white = 0,
  black_african_american = 1,
  asian_pacific_islander = 2,
  american_indian_alaska_native = 3,
  two_or_more_races = 4,
  hispanic_latino = 5,
};

inline constexpr int kNumSexes = 2;
inline constexpr int kNumRaces = 6;
inline constexpr int kNumGroups = kNumSexes * kNumRaces;

std::string_view to_string(Sex s);
std::string_view to_string(RaceEthnicity r);
std::optional<Sex> sex_from_string(std::string_view s);
std::optional<RaceEthnicity> race_from_string(std::string_view s);

// One of the twelve sex x race/ethnicity cells. The fixed ordering used for
// stratified allocation is race-major, sex-minor, which keeps the sex
// marginal exactly balanced whenever the total is even.
struct DemographicGroup {
  Sex sex = Sex::female;
  RaceEthnicity race = RaceEthnicity::white;

  int index() const {
    return static_cast<int>(race) * kNumSexes + static_cast<int>(sex);
  }
  static DemographicGroup from_index(int index);

  friend auto operator<=>(const DemographicGroup&, const DemographicGroup&) = default;
};

// ---- name statistics --------------------------------------------------

struct FirstNameEntry {
  std::string name;  // lowercase
  Sex sex = Sex::female;
  std::uint64_t count = 0;
};

// Aggregate first-name frequency table, loaded from `name,sex,count` CSV
// rows (sex is F or M). Rows repeating a (name, sex) pair — e.g. per-year
// counts — are summed. Aggregates below min_count are dropped, mirroring
// how small cells are suppressed in public name statistics.
class FirstNameTable {
 public:
  static FirstNameTable load(std::istream& in, std::uint64_t min_count = 6);
  static FirstNameTable load_file(const std::string& path, std::uint64_t min_count = 6);

  std::span<const FirstNameEntry> entries(Sex sex) const;
  // Inclusive cumulative counts aligned with entries(sex), for sampling.
  std::span<const double> cumulative(Sex sex) const;
  std::size_t size(Sex sex) const { return by_sex_[static_cast<int>(sex)].size(); }

 private:
  std::array<std::vector<FirstNameEntry>, kNumSexes> by_sex_;
  std::array<std::vector<double>, kNumSexes> cumulative_;
};

struct SurnameEntry {
  std::string surname;  // lowercase
  // Race/ethnicity shares, ordered by the RaceEthnicity enum. Suppressed
  // cells read as 0, so a row may sum to less than 1; sampling normalizes
  // by the row total.
  std::array<double, kNumRaces> shares{};
};

// Surname table loaded from CSV rows of
// surname,pct_white,pct_black,pct_api,pct_aian,pct_2prace,pct_hispanic
// with percentages in [0, 100]; empty or "(S)" cells (suppressed) read as 0.
class SurnameTable {
 public:
  static SurnameTable load(std::istream& in);
  static SurnameTable load_file(const std::string& path);

  std::span<const SurnameEntry> entries() const { return entries_; }

 private:
  std::vector<SurnameEntry> entries_;
};

// ---- synthesis ----------------------------------------------------------

struct PatronIdentity {
  std::string first_name;  // lowercase
  std::string surname;     // lowercase
  DemographicGroup group;

  friend bool operator==(const PatronIdentity&, const PatronIdentity&) = default;
};

// "malik robinson" -> "Malik Robinson".
std::string display_name(const PatronIdentity& identity);

// Draws a first name of the given sex with probability proportional to its
// recorded count.
std::string sample_first_name(const FirstNameTable& table, Sex sex, RngEngine& rng);

// Draws a surname uniformly, then draws a race/ethnicity label from that
// surname's share distribution; repeats until the label matches `race`.
// Throws std::runtime_error if max_attempts draws never match (possible if
// the table carries ~no mass for the requested category).
std::string sample_surname(const SurnameTable& table, RaceEthnicity race,
                           RngEngine& rng, int max_attempts = 10000);

// Balanced cohort of n identities: every group receives floor(n/12), the
// remainder goes one each to the first groups in the fixed group ordering.
// Output is ordered by group, then draw order; callers wanting a shuffled
// cohort shuffle afterwards.
std::vector<PatronIdentity> synthesize_cohort(int n, const FirstNameTable& first_names,
                                              const SurnameTable& surnames,
                                              RngEngine& rng);

}  // namespace refaudit
