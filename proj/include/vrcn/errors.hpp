#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrcn {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A NaN/Inf reached an operation that refuses non-finite input.
struct NumericError : std::domain_error {
  using std::domain_error::domain_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  // 1-based; 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace vrcn
