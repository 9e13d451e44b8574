#pragma once

#include <stdexcept>
#include <string>

namespace laptime {

// Raised for invalid configuration documents or parameter combinations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an optimization fails (infeasible, diverged, iteration cap).
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Raised for file-system and parse failures.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace laptime
