#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glyphgen {

/// Machine-readable failure category; the CLI maps each to its own exit code.
enum class ErrorCategory { config, io, integrity, divergence, shape, index, statistics, training };

std::string_view category_name(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCategory::config, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorCategory::integrity, w) {}
};
/// Raised when a checkpoint carries an unknown format version.
struct IncompatibleError : Error {
  explicit IncompatibleError(const std::string& w) : Error(ErrorCategory::integrity, w) {}
};
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& w) : Error(ErrorCategory::divergence, w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorCategory::shape, w) {}
};
struct IndexError : Error {
  explicit IndexError(const std::string& w) : Error(ErrorCategory::index, w) {}
};
struct StatisticsError : Error {
  explicit StatisticsError(const std::string& w) : Error(ErrorCategory::statistics, w) {}
};
struct TrainingFailure : Error {
  explicit TrainingFailure(const std::string& w) : Error(ErrorCategory::training, w) {}
};

/// Process exit code for a category (0 is reserved for success).
int exit_code(ErrorCategory c);

}  // namespace glyphgen
