#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "refaudit/interpretation.hpp"
#include "refaudit/stats.hpp"
#include "test_support.hpp"

using namespace refaudit;

namespace {

// Fit fixture covering all four decision cells: clears both gates, clears
// only p, clears only the coefficient, and a separation suspect.
StatLogitFit crafted_fit() {
  StatLogitFit fit;
  fit.terms = {"dear", "hello", "certainly", "renewal"};
  fit.beta = {-1.30, -0.20, 1.10, 21.0};
  fit.se = {0.20, 0.03, 0.70, 900.0};
  fit.separation_suspect = {false, false, false, true};
  fit.z.resize(fit.beta.size());
  fit.p.resize(fit.beta.size());
  for (std::size_t j = 0; j < fit.beta.size(); ++j) {
    fit.z[j] = fit.beta[j] / fit.se[j];
    fit.p[j] = stats::normal_two_sided_p(fit.z[j]);
  }
  fit.converged = true;
  return fit;
}

InteractionRecord record_with(Sex sex, RaceEthnicity race,
                              const std::string& response,
                              ResponseStatus status = ResponseStatus::ok) {
  InteractionRecord r;
  r.identity.group.sex = sex;
  r.identity.group.race = race;
  r.response_text = response;
  r.status = status;
  return r;
}

}  // namespace

TEST_CASE("salience criteria arithmetic") {
  SalienceCriteria c;
  c.alpha = 0.05;
  c.family = 120;
  CHECK(c.p_threshold() == 0.05 / 120.0);
  CHECK(c.min_abs_coef == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("odds ratios") {
  CHECK(odds_ratio(0.0) == 1.0);
  CHECK(odds_ratio(std::log(2.0)) == doctest::Approx(2.0).epsilon(1e-12));
  // the strongest marker scale seen in practice: beta around -7.91 maps to
  // odds shrinking by a factor of ~2700
  const double r = odds_ratio(-7.91);
  CHECK(r > 3.6e-4);
  CHECK(r < 3.7e-4);
  CHECK(r == doctest::Approx(0.0003670545805950983).epsilon(1e-12));
}

TEST_CASE("dual-threshold salience filter") {
  const StatLogitFit fit = crafted_fit();
  SalienceCriteria criteria;
  criteria.alpha = 0.05;
  criteria.family = 100;  // threshold 5e-4

  const SalienceResult result = salience_filter(fit, criteria);

  // "dear": |z| = 6.5 -> p ~ 8e-11, |beta| = 1.30 >= ln 2  => salient.
  // "hello": p ~ 3e-11 clears, but |beta| = 0.20 < ln 2    => rejected.
  // "certainly": |beta| clears, p ~ 0.116 does not         => rejected.
  // "renewal": separation suspect                          => sidelined.
  REQUIRE(result.markers.size() == 1);
  const SalientMarker& m = result.markers.front();
  CHECK(m.term == "dear");
  CHECK(m.beta == -1.30);
  CHECK(m.se == 0.20);
  CHECK(m.odds_ratio == doctest::Approx(std::exp(-1.30)).epsilon(1e-12));
  CHECK(m.favored_class == 0);  // negative coefficient favors class 0

  REQUIRE(result.suspect_terms.size() == 1);
  CHECK(result.suspect_terms.front() == "renewal");
}

TEST_CASE("markers come back sorted by p") {
  StatLogitFit fit;
  fit.terms = {"alpha", "bravo", "charlie"};
  fit.beta = {0.9, -2.0, 1.4};
  fit.se = {0.2, 0.25, 0.25};
  fit.separation_suspect = {false, false, false};
  fit.z.resize(3);
  fit.p.resize(3);
  for (std::size_t j = 0; j < 3; ++j) {
    fit.z[j] = fit.beta[j] / fit.se[j];
    fit.p[j] = stats::normal_two_sided_p(fit.z[j]);
  }

  SalienceCriteria criteria;
  criteria.alpha = 0.05;
  criteria.family = 10;

  const SalienceResult result = salience_filter(fit, criteria);
  REQUIRE(result.markers.size() == 3);
  CHECK(result.markers[0].term == "bravo");    // |z| = 8.0
  CHECK(result.markers[1].term == "charlie");  // |z| = 5.6
  CHECK(result.markers[2].term == "alpha");    // |z| = 4.5
  CHECK(result.markers[0].favored_class == 0);
  CHECK(result.markers[1].favored_class == 1);
}

TEST_CASE("volcano points mirror the fit") {
  const StatLogitFit fit = crafted_fit();
  SalienceCriteria criteria;
  criteria.alpha = 0.05;
  criteria.family = 100;

  const std::vector<VolcanoPoint> points = volcano_points(fit, criteria);
  REQUIRE(points.size() == 3);  // suspect "renewal" omitted
  CHECK(points[0].term == "dear");
  CHECK(points[1].term == "hello");
  CHECK(points[2].term == "certainly");

  CHECK(points[0].beta == -1.30);
  CHECK(points[0].neg_log10_p ==
        doctest::Approx(-std::log10(fit.p[0])).epsilon(1e-12));
  CHECK(points[0].salient);
  CHECK_FALSE(points[1].salient);
  CHECK_FALSE(points[2].salient);

  SUBCASE("tiny p-values are clamped, not infinite") {
    StatLogitFit extreme = fit;
    extreme.p[0] = 0.0;  // underflowed two-sided tail
    const auto clamped = volcano_points(extreme, criteria);
    CHECK(clamped[0].neg_log10_p == doctest::Approx(300.0));
    CHECK(std::isfinite(clamped[0].neg_log10_p));
  }
}

TEST_CASE("term presence rates by grouping") {
  std::vector<InteractionRecord> records;
  // 3 female docs (2 with "dear"), 2 male docs (0 with "dear"); one failed
  // female record mentioning the term must not count anywhere.
  records.push_back(record_with(Sex::female, RaceEthnicity::white,
                                "Dear Mrs. Lee,\n\nOf course."));
  records.push_back(record_with(Sex::female, RaceEthnicity::black_african_american,
                                "dear patron, the catalog lists it."));
  records.push_back(
      record_with(Sex::female, RaceEthnicity::white, "Hello! Happy to help."));
  records.push_back(
      record_with(Sex::male, RaceEthnicity::black_african_american, "Hello, certainly."));
  records.push_back(
      record_with(Sex::male, RaceEthnicity::asian_pacific_islander, "The stacks close at 9."));
  records.push_back(record_with(Sex::female, RaceEthnicity::white,
                                "dear reader", ResponseStatus::failed));

  SUBCASE("by sex") {
    const PresenceRates rates =
        term_presence_rates(records, "dear", GroupingKind::sex);
    REQUIRE(rates.group_names.size() == 2);
    CHECK(rates.group_names[0] == "female");
    CHECK(rates.group_names[1] == "male");
    CHECK(rates.group_sizes[0] == 3);  // failed record excluded
    CHECK(rates.group_sizes[1] == 2);
    CHECK(rates.containing[0] == 2);
    CHECK(rates.containing[1] == 0);
    CHECK(rates.rates[0] == doctest::Approx(2.0 / 3.0));
    CHECK(rates.rates[1] == 0.0);
  }
  SUBCASE("by race") {
    const PresenceRates rates =
        term_presence_rates(records, "hello", GroupingKind::race);
    REQUIRE(rates.group_names.size() == 6);
    double total = 0;
    for (std::size_t g = 0; g < 6; ++g) total += rates.group_sizes[g];
    CHECK(total == 5);
    // empty groups report a zero rate rather than dividing by zero
    for (std::size_t g = 0; g < 6; ++g)
      if (rates.group_sizes[g] == 0) CHECK(rates.rates[g] == 0.0);
  }
  SUBCASE("matching is token-exact, not substring") {
    const PresenceRates rates =
        term_presence_rates(records, "close", GroupingKind::sex);
    CHECK(rates.containing[0] == 0);
    CHECK(rates.containing[1] == 0);  // "closes" is a different token
  }
}

TEST_CASE("volcano csv lists every term including suspects") {
  test_support::scratch_dir dir("volcano-csv");
  const StatLogitFit fit = crafted_fit();
  SalienceCriteria criteria;
  criteria.alpha = 0.05;
  criteria.family = 100;

  const std::string path = dir.file("volcano.csv");
  write_volcano_csv(path, fit, criteria, "deadbeefdeadbeef");
  const std::string text = test_support::slurp(path);

  CHECK(text.find("term") != std::string::npos);
  CHECK(text.find("neg_log10_p") != std::string::npos);
  CHECK(text.find("deadbeefdeadbeef") != std::string::npos);
  for (const std::string& term : fit.terms)
    CHECK(text.find(term) != std::string::npos);

  // the suspect row carries salient=0, suspect=1
  const auto renewal_pos = text.find("renewal");
  REQUIRE(renewal_pos != std::string::npos);
  const auto line_end = text.find('\n', renewal_pos);
  const std::string row = text.substr(renewal_pos, line_end - renewal_pos);
  CHECK(row.find(",0,1,deadbeefdeadbeef") != std::string::npos);

  // the salient row carries salient=1, suspect=0
  const auto dear_pos = text.find("dear");
  const std::string dear_row =
      text.substr(dear_pos, text.find('\n', dear_pos) - dear_pos);
  CHECK(dear_row.find(",1,0,deadbeefdeadbeef") != std::string::npos);
}

TEST_CASE("volcano svg is a self-contained chart") {
  test_support::scratch_dir dir("volcano-svg");
  const StatLogitFit fit = crafted_fit();
  SalienceCriteria criteria;
  criteria.alpha = 0.05;
  criteria.family = 100;

  const auto points = volcano_points(fit, criteria);
  const std::string path = dir.file("volcano.svg");
  write_volcano_svg(path, points, criteria, "male vs female",
                    "deadbeefdeadbeef");
  const std::string svg = test_support::slurp(path);

  CHECK((svg.rfind("<svg", 0) == 0 || svg.rfind("<?xml", 0) == 0));
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("stroke-dasharray") != std::string::npos);  // threshold rules
  CHECK(svg.find("male vs female") != std::string::npos);
  CHECK(svg.find("deadbeefdeadbeef") != std::string::npos);
  CHECK(svg.find("dear") != std::string::npos);  // salient point is labeled
}
