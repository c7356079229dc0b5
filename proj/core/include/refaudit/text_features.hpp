#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "refaudit/demographics.hpp"

namespace refaudit {

// Demographic-shortcut masking applied between tokenization and feature
// extraction, so classifiers cannot read sex straight off an honorific (or,
// optionally, off the patron's own name echoed back in the reply).
struct MaskPolicy {
  std::vector<std::string> honorifics = {"mr",   "mrs",   "ms",   "miss",
                                         "sir",  "madam", "maam", "mx"};
  bool mask_patron_name = false;
};

inline constexpr std::string_view kHonorificPlaceholder = "<hon>";
inline constexpr std::string_view kNamePlaceholder = "<name>";

// Lowercases, removes apostrophes (so "I'm" -> "im"), splits on every other
// non-alphabetic character, and drops tokens shorter than 2 characters.
std::vector<std::string> tokenize(std::string_view text);

std::vector<std::string> apply_masks(std::vector<std::string> tokens,
                                     const PatronIdentity& identity,
                                     const MaskPolicy& policy);

// The built-in English stopword list (~150 words, apostrophe-stripped forms
// included so it matches tokenize output).
std::span<const std::string> default_stopwords();

// Ordered term list; position = selection rank.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const { return terms_.size(); }
  const std::vector<std::string>& terms() const { return terms_; }
  const std::string& term(std::size_t i) const { return terms_[i]; }
  std::optional<std::size_t> index_of(std::string_view term) const;

 private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Selects the top-k terms by total tf-idf mass over the corpus (raw tf
// times smoothed idf, summed across documents, before row normalization),
// ties broken lexicographically. Stopwords, placeholder tokens and tokens
// shorter than 2 characters are never candidates. Throws
// std::invalid_argument if the corpus is empty or no candidate terms remain.
Vocabulary build_vocabulary(std::span<const std::vector<std::string>> documents,
                            std::size_t k, std::span<const std::string> stopwords);

// Row-major dense document-term matrix.
struct TfIdfMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // rows * cols

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
};

// tf = raw in-document count; idf = ln((1+N)/(1+df)) + 1; weight = tf*idf;
// rows L2-normalized (all-zero rows stay zero).
TfIdfMatrix transform(std::span<const std::vector<std::string>> documents,
                      const Vocabulary& vocab);

// One term per line, rank order.
void write_vocabulary(const std::string& path, const Vocabulary& vocab);
// Comma-separated with a header row of terms; for external inspection.
void write_matrix_csv(const std::string& path, const TfIdfMatrix& matrix,
                      const Vocabulary& vocab);

}  // namespace refaudit
