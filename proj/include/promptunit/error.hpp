#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace promptunit {

enum class ErrorCode {
  // prompt files and templates
  MalformedRoleHeader,
  MalformedFrontMatter,
  MalformedPlaceholder,
  MultipleUserPlaceholders,
  NoUserPlaceholder,
  PlaceholderOutsideUser,
  UnboundPlaceholder,
  // gateway
  Timeout,
  ProviderError,
  RateLimited,
  MockScriptExhausted,
  MalformedScript,
  // extraction / generation / judging
  EmptyExtraction,
  CountMismatch,
  CsvUnparseable,
  EmptyGeneration,
  DanglingRuleId,
  UnparseableVerdict,
  // metrics / reporting
  EmptySlice,
  NoJudgedRules,
  MisalignedRuns,
  MissingSectionData,
  // artifacts and orchestration
  MalformedArtifact,
  StageDependencyMissing,
  ConfigInvalid,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Base exception for every failure surfaced by the library. The code is
/// the stable, machine-checkable part; the message is for humans.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

/// Provider-side failure carrying the HTTP status (0 when no response arrived).
class ProviderError : public Error {
public:
  ProviderError(ErrorCode code, int status, std::string body)
      : Error(code, "status " + std::to_string(status) + ": " + body),
        status_(status), body_(std::move(body)) {}

  [[nodiscard]] int status() const noexcept { return status_; }
  [[nodiscard]] const std::string& body() const noexcept { return body_; }

private:
  int status_;
  std::string body_;
};

/// CLI exit status for an error: 2 config, 3 stage dependency, 4 provider, 5 parse.
int exit_code_for(ErrorCode code) noexcept;

}  // namespace promptunit
