#include "ltsm/error.hpp"

namespace ltsm {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::InvalidData: return "InvalidData";
    case Errc::SplitTooSmall: return "SplitTooSmall";
    case Errc::InvalidRate: return "InvalidRate";
    case Errc::SeriesTooShort: return "SeriesTooShort";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::UnknownFeature: return "UnknownFeature";
    case Errc::ShapeError: return "ShapeError";
    case Errc::InputTooShort: return "InputTooShort";
    case Errc::DegenerateRange: return "DegenerateRange";
    case Errc::InvalidToken: return "InvalidToken";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::InvalidRank: return "InvalidRank";
    case Errc::NumericalError: return "NumericalError";
    case Errc::InvalidStep: return "InvalidStep";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::HorizonMismatch: return "HorizonMismatch";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

ParseError::ParseError(std::size_t row, std::size_t column, const std::string& detail)
    : Error(Errc::ParseError,
            "row " + std::to_string(row) + ", column " + std::to_string(column) + ": " + detail),
      row_(row),
      column_(column) {}

NumericalError::NumericalError(long index, const std::string& detail)
    : Error(Errc::NumericalError, detail + " (at index " + std::to_string(index) + ")"),
      index_(index) {}

ConfigError::ConfigError(std::string key, const std::string& detail)
    : Error(Errc::ConfigError, key + ": " + detail), key_(std::move(key)) {}

}  // namespace ltsm
