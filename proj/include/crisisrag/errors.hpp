#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crisisrag {

enum class Errc {
  // corpus
  MissingColumn,
  UnknownLabel,
  DuplicateId,
  UnmappableEvent,
  EmptyCorpus,
  MalformedRecord,
  // prompting / selection
  EmptyTweet,
  EmptyDemos,
  KTooLarge,
  InvalidConfig,
  // embedding / index
  EmptyText,
  DimensionMismatch,
  InsufficientClassMembers,
  DivergedLoss,
  ZeroNormEmbedding,
  ZeroNormVector,
  UnnormalizedQuery,
  DegenerateInput,
  // strategies
  ContextOverflow,
  MissingLogprobs,
  EmptyLogprobs,
  // eval
  LengthMismatch,
  RelabelNotAnError,
  ZeroDelta,
  // loraplan
  ShapeMismatch,
  // backend
  BackendUnavailable,
  Timeout,
  HttpStatus,
  ProtocolShape,
  AuthMissing,
  ScriptExhausted,
  EmptyMessages,
  // files
  Io,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::UnmappableEvent: return "UnmappableEvent";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::EmptyTweet: return "EmptyTweet";
    case Errc::EmptyDemos: return "EmptyDemos";
    case Errc::KTooLarge: return "KTooLarge";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyText: return "EmptyText";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::InsufficientClassMembers: return "InsufficientClassMembers";
    case Errc::DivergedLoss: return "DivergedLoss";
    case Errc::ZeroNormEmbedding: return "ZeroNormEmbedding";
    case Errc::ZeroNormVector: return "ZeroNormVector";
    case Errc::UnnormalizedQuery: return "UnnormalizedQuery";
    case Errc::DegenerateInput: return "DegenerateInput";
    case Errc::ContextOverflow: return "ContextOverflow";
    case Errc::MissingLogprobs: return "MissingLogprobs";
    case Errc::EmptyLogprobs: return "EmptyLogprobs";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::RelabelNotAnError: return "RelabelNotAnError";
    case Errc::ZeroDelta: return "ZeroDelta";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::BackendUnavailable: return "BackendUnavailable";
    case Errc::Timeout: return "Timeout";
    case Errc::HttpStatus: return "HttpStatus";
    case Errc::ProtocolShape: return "ProtocolShape";
    case Errc::AuthMissing: return "AuthMissing";
    case Errc::ScriptExhausted: return "ScriptExhausted";
    case Errc::EmptyMessages: return "EmptyMessages";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

/// True for failures that originate in the model or embedding service rather
/// than in user input. The CLI maps these to exit code 3.
constexpr bool is_backend_error(Errc code) {
  switch (code) {
    case Errc::BackendUnavailable:
    case Errc::Timeout:
    case Errc::HttpStatus:
    case Errc::ProtocolShape:
    case Errc::AuthMissing:
    case Errc::ScriptExhausted:
    case Errc::MissingLogprobs:
      return true;
    default:
      return false;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace crisisrag
