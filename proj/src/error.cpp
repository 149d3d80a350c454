#include "glyphgen/error.hpp"

namespace glyphgen {

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::integrity: return "integrity";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::shape: return "shape";
    case ErrorCategory::index: return "index";
    case ErrorCategory::statistics: return "statistics";
    case ErrorCategory::training: return "training";
  }
  return "unknown";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::io: return 3;
    case ErrorCategory::integrity: return 4;
    case ErrorCategory::divergence: return 5;
    case ErrorCategory::shape: return 6;
    case ErrorCategory::index: return 7;
    case ErrorCategory::statistics: return 8;
    case ErrorCategory::training: return 9;
  }
  return 1;
}

}  // namespace glyphgen
