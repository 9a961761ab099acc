#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nest {

// Categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kDimension,
  kConfig,
  kHierarchy,
  kContract,
  kNumeric,
  kIngestion,
  kRange,
  kIo,
  kTraversal,
  kNotImplemented,
  kMismatch,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Process exit status used by the command-line tool for each category.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <ErrorKind K>
class KindedError : public Error {
 public:
  explicit KindedError(const std::string& message) : Error(K, message) {}
};

using DimensionError = KindedError<ErrorKind::kDimension>;
using ConfigError = KindedError<ErrorKind::kConfig>;
using HierarchyError = KindedError<ErrorKind::kHierarchy>;
using ContractError = KindedError<ErrorKind::kContract>;
using NumericError = KindedError<ErrorKind::kNumeric>;
using IngestionError = KindedError<ErrorKind::kIngestion>;
using RangeError = KindedError<ErrorKind::kRange>;
using IoError = KindedError<ErrorKind::kIo>;
using TraversalError = KindedError<ErrorKind::kTraversal>;
using NotImplementedError = KindedError<ErrorKind::kNotImplemented>;
using MismatchError = KindedError<ErrorKind::kMismatch>;

}  // namespace nest
