#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace codeguard {

enum class ErrorCode {
  InvalidArgument,
  Io,
  MalformedRecord,
  DuplicateId,
  UnsupportedLanguage,
  EmptyText,
  DimensionMismatch,
  NoCandidates,
  DuplicateAscii,
  AsciiHomoglyph,
  BadCodepoint,
  NoReplaceablePair,
  ProviderFailure,
  InsufficientCandidates,
  EmptyTable,
  EmptyProbeSet,
  ModelFailure,
  LengthMismatch,
  EmptyCorpus,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnsupportedLanguage: return "UnsupportedLanguage";
    case ErrorCode::EmptyText: return "EmptyText";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::DuplicateAscii: return "DuplicateAscii";
    case ErrorCode::AsciiHomoglyph: return "AsciiHomoglyph";
    case ErrorCode::BadCodepoint: return "BadCodepoint";
    case ErrorCode::NoReplaceablePair: return "NoReplaceablePair";
    case ErrorCode::ProviderFailure: return "ProviderFailure";
    case ErrorCode::InsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::EmptyTable: return "EmptyTable";
    case ErrorCode::EmptyProbeSet: return "EmptyProbeSet";
    case ErrorCode::ModelFailure: return "ModelFailure";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
  }
  return "Unknown";
}

/// Base exception for every failure the toolkit reports. The code is stable
/// and is what the CLI prints in its machine-readable error trailer.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Failures of something outside the process (files, subprocesses).
  bool is_external() const noexcept {
    return code_ == ErrorCode::Io || code_ == ErrorCode::ProviderFailure ||
           code_ == ErrorCode::ModelFailure;
  }

 private:
  ErrorCode code_;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& why)
      : Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + why), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id)
      : Error(ErrorCode::DuplicateId, "duplicate sample id '" + id + "'"), id_(std::move(id)) {}

  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

}  // namespace codeguard
