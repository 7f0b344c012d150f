#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stlsgd {

// Invalid or inconsistent user-facing configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data; line numbers are 1-based, 0 marks whole-file problems
// (CLI exit code 2).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite iterates or loss mid-run (CLI exit code 3).
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(double eta, std::int64_t k, int stage)
      : std::runtime_error("non-finite loss (eta=" + std::to_string(eta) +
                           ", k=" + std::to_string(k) +
                           ", stage=" + std::to_string(stage) + ")"),
        eta_(eta),
        k_(k),
        stage_(stage) {}
  double eta() const { return eta_; }
  std::int64_t k() const { return k_; }
  int stage() const { return stage_; }

 private:
  double eta_;
  std::int64_t k_;
  int stage_;
};

}  // namespace stlsgd
