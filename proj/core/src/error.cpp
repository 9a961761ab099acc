#include "nest/error.hpp"

namespace nest {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kHierarchy: return "hierarchy";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kTraversal: return "traversal";
    case ErrorKind::kNotImplemented: return "not-implemented";
    case ErrorKind::kMismatch: return "mismatch";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kDimension: return 3;
    case ErrorKind::kHierarchy: return 3;
    case ErrorKind::kContract: return 4;
    case ErrorKind::kNumeric: return 5;
    case ErrorKind::kIngestion: return 6;
    case ErrorKind::kRange: return 6;
    case ErrorKind::kIo: return 7;
    case ErrorKind::kTraversal: return 8;
    case ErrorKind::kNotImplemented: return 9;
    case ErrorKind::kMismatch: return 10;
  }
  return 1;
}

}  // namespace nest
