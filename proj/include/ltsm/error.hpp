#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ltsm {

enum class Errc {
  ParseError,
  EmptyDataset,
  InvalidData,
  SplitTooSmall,
  InvalidRate,
  SeriesTooShort,
  EmptyCorpus,
  UnknownFeature,
  ShapeError,
  InputTooShort,
  DegenerateRange,
  InvalidToken,
  CheckpointMismatch,
  CorruptCheckpoint,
  InvalidRank,
  NumericalError,
  InvalidStep,
  InvalidArgument,
  HorizonMismatch,
  ConfigError,
  IoError,
};

const char* errc_name(Errc code) noexcept;

/// Base exception for every failure raised by the library. `code()` is the
/// stable, testable part; `what()` carries human-readable context.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& detail);
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class NumericalError : public Error {
 public:
  NumericalError(long index, const std::string& detail);
  /// Layer index for forward failures, optimizer step for training failures.
  long index() const noexcept { return index_; }

 private:
  long index_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& detail);
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace ltsm
