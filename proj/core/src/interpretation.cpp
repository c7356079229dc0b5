#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "refaudit/interpretation.hpp"
#include "refaudit/text_features.hpp"

namespace refaudit {

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double clamped_neg_log10(double p) {
  return -std::log10(std::max(p, 1e-300));
}

}  // namespace

double SalienceCriteria::p_threshold() const {
  if (family < 1)
    throw std::invalid_argument("SalienceCriteria: family must be >= 1");
  return alpha / static_cast<double>(family);
}

double odds_ratio(double beta) { return std::exp(beta); }

SalienceResult salience_filter(const StatLogitFit& fit,
                               const SalienceCriteria& criteria) {
  const double p_cut = criteria.p_threshold();
  SalienceResult out;
  for (std::size_t j = 0; j < fit.terms.size(); ++j) {
    if (fit.separation_suspect[j]) {
      out.suspect_terms.push_back(fit.terms[j]);
      continue;
    }
    if (fit.p[j] < p_cut && std::abs(fit.beta[j]) >= criteria.min_abs_coef) {
      SalientMarker m;
      m.term = fit.terms[j];
      m.beta = fit.beta[j];
      m.se = fit.se[j];
      m.p = fit.p[j];
      m.odds_ratio = odds_ratio(fit.beta[j]);
      m.favored_class = fit.beta[j] > 0.0 ? 1 : 0;
      out.markers.push_back(std::move(m));
    }
  }
  std::sort(out.markers.begin(), out.markers.end(),
            [](const SalientMarker& a, const SalientMarker& b) {
              if (a.p != b.p) return a.p < b.p;
              return a.term < b.term;
            });
  std::sort(out.suspect_terms.begin(), out.suspect_terms.end());
  return out;
}

PresenceRates term_presence_rates(std::span<const InteractionRecord> records,
                                  std::string_view term, GroupingKind grouping) {
  PresenceRates out;
  switch (grouping) {
    case GroupingKind::sex:
      for (int s = 0; s < kNumSexes; ++s)
        out.group_names.emplace_back(to_string(static_cast<Sex>(s)));
      break;
    case GroupingKind::race:
      for (int r = 0; r < kNumRaces; ++r)
        out.group_names.emplace_back(to_string(static_cast<RaceEthnicity>(r)));
      break;
    case GroupingKind::group:
      for (int g = 0; g < kNumGroups; ++g) {
        const DemographicGroup dg = DemographicGroup::from_index(g);
        out.group_names.push_back(std::string(to_string(dg.race)) + "/" +
                                  std::string(to_string(dg.sex)));
      }
      break;
  }
  out.group_sizes.assign(out.group_names.size(), 0);
  out.containing.assign(out.group_names.size(), 0);

  const std::string needle(term);
  for (const InteractionRecord& r : records) {
    if (r.status != ResponseStatus::ok) continue;
    std::size_t g = 0;
    switch (grouping) {
      case GroupingKind::sex: g = static_cast<std::size_t>(r.identity.group.sex); break;
      case GroupingKind::race: g = static_cast<std::size_t>(r.identity.group.race); break;
      case GroupingKind::group: g = static_cast<std::size_t>(r.identity.group.index()); break;
    }
    ++out.group_sizes[g];
    const std::vector<std::string> tokens = tokenize(r.response_text);
    if (std::find(tokens.begin(), tokens.end(), needle) != tokens.end())
      ++out.containing[g];
  }
  out.rates.resize(out.group_names.size());
  for (std::size_t g = 0; g < out.rates.size(); ++g)
    out.rates[g] = out.group_sizes[g] == 0
                       ? 0.0
                       : static_cast<double>(out.containing[g]) /
                             static_cast<double>(out.group_sizes[g]);
  return out;
}

std::vector<VolcanoPoint> volcano_points(const StatLogitFit& fit,
                                         const SalienceCriteria& criteria) {
  const double p_cut = criteria.p_threshold();
  std::vector<VolcanoPoint> out;
  out.reserve(fit.terms.size());
  for (std::size_t j = 0; j < fit.terms.size(); ++j) {
    if (fit.separation_suspect[j]) continue;
    VolcanoPoint pt;
    pt.term = fit.terms[j];
    pt.beta = fit.beta[j];
    pt.neg_log10_p = clamped_neg_log10(fit.p[j]);
    pt.salient =
        fit.p[j] < p_cut && std::abs(fit.beta[j]) >= criteria.min_abs_coef;
    out.push_back(std::move(pt));
  }
  return out;
}

void write_volcano_csv(const std::string& path, const StatLogitFit& fit,
                       const SalienceCriteria& criteria,
                       std::string_view fingerprint) {
  const double p_cut = criteria.p_threshold();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "term,beta,se,p,neg_log10_p,salient,suspect,fingerprint\n";
  for (std::size_t j = 0; j < fit.terms.size(); ++j) {
    const bool suspect = fit.separation_suspect[j];
    const bool salient = !suspect && fit.p[j] < p_cut &&
                         std::abs(fit.beta[j]) >= criteria.min_abs_coef;
    out << fit.terms[j] << ',' << fmt("%.17g", fit.beta[j]) << ','
        << fmt("%.17g", fit.se[j]) << ',' << fmt("%.17g", fit.p[j]) << ','
        << fmt("%.17g", clamped_neg_log10(fit.p[j])) << ',' << (salient ? 1 : 0)
        << ',' << (suspect ? 1 : 0) << ',' << fingerprint << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

void write_volcano_svg(const std::string& path,
                       std::span<const VolcanoPoint> points,
                       const SalienceCriteria& criteria, std::string_view title,
                       std::string_view fingerprint) {
  const double p_line = clamped_neg_log10(criteria.p_threshold());

  double x_extent = criteria.min_abs_coef * 1.4;
  double y_max = p_line * 1.3;
  for (const VolcanoPoint& pt : points) {
    x_extent = std::max(x_extent, std::abs(pt.beta) * 1.1);
    y_max = std::max(y_max, pt.neg_log10_p * 1.1);
  }
  if (y_max <= 0.0) y_max = 1.0;

  constexpr double kWidth = 800.0, kHeight = 600.0, kPad = 64.0;
  const double plot_w = kWidth - 2 * kPad, plot_h = kHeight - 2 * kPad;
  const auto px = [&](double beta) {
    return kPad + (beta + x_extent) / (2.0 * x_extent) * plot_w;
  };
  const auto py = [&](double y) { return kHeight - kPad - y / y_max * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  svg << "  <metadata>alpha=" << fmt("%.17g", criteria.alpha)
      << " family=" << criteria.family
      << " p_threshold=" << fmt("%.17g", criteria.p_threshold())
      << " min_abs_coef=" << fmt("%.17g", criteria.min_abs_coef)
      << " fingerprint=" << xml_escape(fingerprint) << "</metadata>\n";
  svg << "  <rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << kWidth / 2
      << "\" y=\"28\" text-anchor=\"middle\" font-size=\"16\" "
         "font-family=\"sans-serif\">"
      << xml_escape(title) << "</text>\n";

  // axes
  svg << "  <line x1=\"" << kPad << "\" y1=\"" << kHeight - kPad << "\" x2=\""
      << kWidth - kPad << "\" y2=\"" << kHeight - kPad
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << kPad << "\" y1=\"" << kPad << "\" x2=\"" << kPad
      << "\" y2=\"" << kHeight - kPad << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double bx = -x_extent + tick * (2.0 * x_extent / 4.0);
    svg << "  <text x=\"" << px(bx) << "\" y=\"" << kHeight - kPad + 20
        << "\" text-anchor=\"middle\" font-size=\"11\" "
           "font-family=\"sans-serif\">"
        << fmt("%.2f", bx) << "</text>\n";
    const double ty = tick * (y_max / 4.0);
    svg << "  <text x=\"" << kPad - 8 << "\" y=\"" << py(ty) + 4
        << "\" text-anchor=\"end\" font-size=\"11\" "
           "font-family=\"sans-serif\">"
        << fmt("%.2f", ty) << "</text>\n";
  }
  svg << "  <text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 16
      << "\" text-anchor=\"middle\" font-size=\"13\" "
         "font-family=\"sans-serif\">coefficient (log-odds)</text>\n";
  svg << "  <text x=\"18\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" "
         "font-family=\"sans-serif\" transform=\"rotate(-90 18 "
      << kHeight / 2 << ")\">-log10(p)</text>\n";

  // dashed decision thresholds
  const char* dash = "stroke=\"#555\" stroke-dasharray=\"6,4\"";
  svg << "  <line x1=\"" << px(-criteria.min_abs_coef) << "\" y1=\"" << kPad
      << "\" x2=\"" << px(-criteria.min_abs_coef) << "\" y2=\""
      << kHeight - kPad << "\" " << dash << "/>\n";
  svg << "  <line x1=\"" << px(criteria.min_abs_coef) << "\" y1=\"" << kPad
      << "\" x2=\"" << px(criteria.min_abs_coef) << "\" y2=\"" << kHeight - kPad
      << "\" " << dash << "/>\n";
  if (p_line <= y_max)
    svg << "  <line x1=\"" << kPad << "\" y1=\"" << py(p_line) << "\" x2=\""
        << kWidth - kPad << "\" y2=\"" << py(p_line) << "\" " << dash << "/>\n";

  for (const VolcanoPoint& pt : points) {
    const double cx = px(std::clamp(pt.beta, -x_extent, x_extent));
    const double cy = py(std::min(pt.neg_log10_p, y_max));
    if (pt.salient) {
      svg << "  <circle cx=\"" << cx << "\" cy=\"" << cy
          << "\" r=\"5\" fill=\"crimson\"/>\n";
      svg << "  <text x=\"" << cx + 8 << "\" y=\"" << cy - 6
          << "\" font-size=\"12\" font-family=\"sans-serif\" "
             "fill=\"crimson\">"
          << xml_escape(pt.term) << "</text>\n";
    } else {
      svg << "  <circle cx=\"" << cx << "\" cy=\"" << cy
          << "\" r=\"3\" fill=\"#7a8fa6\" fill-opacity=\"0.75\"/>\n";
    }
  }
  svg << "</svg>\n";

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << svg.str();
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace refaudit
