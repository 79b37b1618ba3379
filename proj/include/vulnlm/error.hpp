#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vulnlm {

enum class ErrorKind {
  UnbalancedBraces,
  UnterminatedLiteral,
  EmptyMethod,
  EmptyCorpus,
  ShapeMismatch,
  EmptySequence,
  ZeroNoiseProbability,
  NonFiniteGradient,
  DivergedTraining,
  EmptyStates,
  NoMethods,
  TooFewStates,
  EmptyLabels,
  TooFewRecords,
  VersionOrder,
  EmptyTest,
  ConfigInvalid,
  PairViolation,
  HashMismatch,
  MissingArtifact,
  FormatError,
};

std::string_view error_kind_name(ErrorKind kind);

// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnbalancedBraces: return "UnbalancedBraces";
    case ErrorKind::UnterminatedLiteral: return "UnterminatedLiteral";
    case ErrorKind::EmptyMethod: return "EmptyMethod";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::ZeroNoiseProbability: return "ZeroNoiseProbability";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::EmptyStates: return "EmptyStates";
    case ErrorKind::NoMethods: return "NoMethods";
    case ErrorKind::TooFewStates: return "TooFewStates";
    case ErrorKind::EmptyLabels: return "EmptyLabels";
    case ErrorKind::TooFewRecords: return "TooFewRecords";
    case ErrorKind::VersionOrder: return "VersionOrder";
    case ErrorKind::EmptyTest: return "EmptyTest";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::PairViolation: return "PairViolation";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace vulnlm
