#include "refaudit/text_features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <unordered_set>

namespace refaudit {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2) tokens.push_back(current);
    current.clear();
  };
  for (char raw : text) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (c == '\'')
      continue;  // removed, not a split point: "I'm" -> "im"
    if (std::isalpha(c))
      current.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  return tokens;
}

std::vector<std::string> apply_masks(std::vector<std::string> tokens,
                                     const PatronIdentity& identity,
                                     const MaskPolicy& policy) {
  const std::unordered_set<std::string_view> honorifics(policy.honorifics.begin(),
                                                        policy.honorifics.end());
  for (std::string& token : tokens) {
    if (honorifics.contains(token)) {
      token = kHonorificPlaceholder;
    } else if (policy.mask_patron_name &&
               (token == identity.first_name || token == identity.surname)) {
      token = kNamePlaceholder;
    }
  }
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], i).second)
      throw std::invalid_argument("Vocabulary: duplicate term '" + terms_[i] + "'");
  }
}

std::optional<std::size_t> Vocabulary::index_of(std::string_view term) const {
  const auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

namespace {

struct TermStats {
  std::size_t df = 0;        // documents containing the term
  std::size_t total_tf = 0;  // raw count over the whole corpus
};

double idf(std::size_t df, std::size_t n_docs) {
  return std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(df))) +
         1.0;
}

}  // namespace

Vocabulary build_vocabulary(std::span<const std::vector<std::string>> documents,
                            std::size_t k, std::span<const std::string> stopwords) {
  if (documents.empty())
    throw std::invalid_argument("build_vocabulary: empty corpus");
  if (k == 0) throw std::invalid_argument("build_vocabulary: k must be positive");

  const std::unordered_set<std::string_view> stop(stopwords.begin(), stopwords.end());
  // std::map keeps candidates sorted, which the lexicographic tie-break
  // below relies on (stable_sort preserves this order among equal masses).
  std::map<std::string, TermStats> stats;
  std::unordered_set<std::string_view> seen_in_doc;
  for (const std::vector<std::string>& doc : documents) {
    seen_in_doc.clear();
    for (const std::string& token : doc) {
      if (token.size() < 2) continue;
      if (token == kHonorificPlaceholder || token == kNamePlaceholder) continue;
      if (stop.contains(token)) continue;
      TermStats& s = stats[token];
      ++s.total_tf;
      if (seen_in_doc.insert(token).second) ++s.df;
    }
  }
  if (stats.empty())
    throw std::invalid_argument(
        "build_vocabulary: no candidate terms after stopword filtering");

  struct Candidate {
    std::string_view term;
    double mass;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(stats.size());
  for (const auto& [term, s] : stats)
    candidates.push_back({term, static_cast<double>(s.total_tf) * idf(s.df, documents.size())});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.mass > b.mass; });

  const std::size_t take = std::min(k, candidates.size());
  std::vector<std::string> terms;
  terms.reserve(take);
  for (std::size_t i = 0; i < take; ++i) terms.emplace_back(candidates[i].term);
  return Vocabulary(std::move(terms));
}

TfIdfMatrix transform(std::span<const std::vector<std::string>> documents,
                      const Vocabulary& vocab) {
  if (vocab.size() == 0) throw std::invalid_argument("transform: empty vocabulary");
  const std::size_t n = documents.size();
  const std::size_t k = vocab.size();

  std::vector<std::size_t> df(k, 0);
  std::vector<std::size_t> tf(k);
  TfIdfMatrix matrix;
  matrix.rows = n;
  matrix.cols = k;
  matrix.values.assign(n * k, 0.0);

  // First pass: document frequencies.
  std::vector<bool> seen(k);
  for (const std::vector<std::string>& doc : documents) {
    std::fill(seen.begin(), seen.end(), false);
    for (const std::string& token : doc) {
      const auto idx = vocab.index_of(token);
      if (idx && !seen[*idx]) {
        seen[*idx] = true;
        ++df[*idx];
      }
    }
  }

  std::vector<double> idf_cache(k);
  for (std::size_t j = 0; j < k; ++j) idf_cache[j] = idf(df[j], n);

  // Second pass: weights + row normalization.
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(tf.begin(), tf.end(), 0);
    for (const std::string& token : documents[r]) {
      const auto idx = vocab.index_of(token);
      if (idx) ++tf[*idx];
    }
    double* row = matrix.values.data() + r * k;
    double norm_sq = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (tf[j] == 0) continue;
      const double w = static_cast<double>(tf[j]) * idf_cache[j];
      row[j] = w;
      norm_sq += w * w;
    }
    if (norm_sq > 0.0) {
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t j = 0; j < k; ++j) row[j] *= inv;
    }
  }
  return matrix;
}

void write_vocabulary(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const std::string& term : vocab.terms()) out << term << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_matrix_csv(const std::string& path, const TfIdfMatrix& matrix,
                      const Vocabulary& vocab) {
  if (vocab.size() != matrix.cols)
    throw std::invalid_argument("write_matrix_csv: vocabulary/matrix mismatch");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t j = 0; j < matrix.cols; ++j)
    out << (j ? "," : "") << vocab.term(j);
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < matrix.rows; ++r) {
    for (std::size_t j = 0; j < matrix.cols; ++j)
      out << (j ? "," : "") << matrix.at(r, j);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace refaudit
