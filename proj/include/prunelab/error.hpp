#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace prunelab {

/// Base exception for every library failure. `code()` is a short stable
/// identifier (e.g. "E_PARSE") that the CLI prints ahead of the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Invalid argument or configuration (precondition violated by the caller).
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& message) : Error("E_INVALID", message) {}
};

/// Malformed input file; message carries the line number when available.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error("E_PARSE", message) {}
};

/// A statistic or metric is undefined for the given input (zero positives,
/// constant vector, zero variance, ...).
class DegenerateInput : public Error {
 public:
  explicit DegenerateInput(const std::string& message) : Error("E_DEGENERATE", message) {}
};

/// Design matrix without full column rank.
class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& message, std::vector<long> columns)
      : Error("E_RANK", message), columns_(std::move(columns)) {}
  /// Indices of the design columns found to be linearly dependent.
  const std::vector<long>& columns() const noexcept { return columns_; }

 private:
  std::vector<long> columns_;
};

/// Non-finite loss during training.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, const std::string& message)
      : Error("E_DIVERGED", message), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  explicit IoError(const std::string& message) : Error("E_IO", message) {}
};

}  // namespace prunelab
