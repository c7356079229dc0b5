#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace refaudit {

// Malformed input data (CSV tables, JSON Lines corpora, config files).
// `line` is 1-based; 0 means "not tied to a specific line".
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string message, std::size_t line = 0)
      : std::runtime_error(line == 0 ? message
                                     : message + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace refaudit
