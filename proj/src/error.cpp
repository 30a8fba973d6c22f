#include "promptunit/error.hpp"

namespace promptunit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedRoleHeader: return "MalformedRoleHeader";
    case ErrorCode::MalformedFrontMatter: return "MalformedFrontMatter";
    case ErrorCode::MalformedPlaceholder: return "MalformedPlaceholder";
    case ErrorCode::MultipleUserPlaceholders: return "MultipleUserPlaceholders";
    case ErrorCode::NoUserPlaceholder: return "NoUserPlaceholder";
    case ErrorCode::PlaceholderOutsideUser: return "PlaceholderOutsideUser";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::MockScriptExhausted: return "MockScriptExhausted";
    case ErrorCode::MalformedScript: return "MalformedScript";
    case ErrorCode::EmptyExtraction: return "EmptyExtraction";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::CsvUnparseable: return "CsvUnparseable";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::DanglingRuleId: return "DanglingRuleId";
    case ErrorCode::UnparseableVerdict: return "UnparseableVerdict";
    case ErrorCode::EmptySlice: return "EmptySlice";
    case ErrorCode::NoJudgedRules: return "NoJudgedRules";
    case ErrorCode::MisalignedRuns: return "MisalignedRuns";
    case ErrorCode::MissingSectionData: return "MissingSectionData";
    case ErrorCode::MalformedArtifact: return "MalformedArtifact";
    case ErrorCode::StageDependencyMissing: return "StageDependencyMissing";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ConfigInvalid:
    case ErrorCode::MalformedScript:
      return 2;
    case ErrorCode::StageDependencyMissing:
      return 3;
    case ErrorCode::Timeout:
    case ErrorCode::ProviderError:
    case ErrorCode::RateLimited:
    case ErrorCode::MockScriptExhausted:
      return 4;
    case ErrorCode::Io:
      return 1;
    default:
      return 5;
  }
}

}  // namespace promptunit
