#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace omnineg {

enum class ErrorCode {
  // numerics / objectives
  ZeroVector,
  DimensionMismatch,
  EmptyBatch,
  NonFiniteValue,
  InvalidArgument,
  // negation data
  EmptyObjectSet,
  SlotOutOfRange,
  ObjectPresent,
  NoPlausibleObject,
  MalformedRecord,
  MissingField,
  InvariantViolation,
  // encoder
  InvalidConfig,
  KOutOfRange,
  TokenOutOfRange,
  SequenceTooLong,
  UnknownObject,
  UnknownWord,
  // pipeline
  EmptyCorpus,
  EmptyEvalSet,
  UnknownImage,
  KTooLarge,
  // process boundary
  Io,
};

std::string_view to_string(ErrorCode code);

/// Domain errors carry a code; `is_io_error` separates them from failures
/// that map to exit status 2 at the command line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  bool is_io_error() const noexcept {
    return code_ == ErrorCode::Io || code_ == ErrorCode::InvalidConfig;
  }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyObjectSet: return "EmptyObjectSet";
    case ErrorCode::SlotOutOfRange: return "SlotOutOfRange";
    case ErrorCode::ObjectPresent: return "ObjectPresent";
    case ErrorCode::NoPlausibleObject: return "NoPlausibleObject";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::UnknownObject: return "UnknownObject";
    case ErrorCode::UnknownWord: return "UnknownWord";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace omnineg
