// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ddsr {

class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed interchange file. Carries the 1-based line number of the offending line.
class parse_error : public std::runtime_error {
 public:
  parse_error(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class missing_prediction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class training_divergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class unsupported_evaluation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class degenerate_state : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddsr
