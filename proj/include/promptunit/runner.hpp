#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptunit/error.hpp"
#include "promptunit/gateway.hpp"
#include "promptunit/test_generator.hpp"

namespace promptunit {

struct CellError {
  ErrorCode code = ErrorCode::ProviderError;
  int status = 0;
  std::string message;

  friend bool operator==(const CellError&, const CellError&) = default;
};

/// One (test, model, repeat) execution. Exactly one of output_text / error is set.
struct TestRunResult {
  std::string test_uid;
  std::string model_id;
  int repeat = 1;
  std::string messages_digest;
  std::optional<std::string> output_text;
  std::chrono::milliseconds latency{0};
  Usage usage;
  std::optional<CellError> error;
};

struct RunOptions {
  int repeats = 1;
  RequestPolicy policy;
  std::size_t parallelism = 8;
};

/// Runs every test on every model `repeats` times. Cell failures are
/// recorded in the result rather than thrown. Results are ordered by
/// (test, model, repeat) regardless of completion order.
std::vector<TestRunResult> run_matrix(Gateway& gateway, const PromptUnderTest& put, std::span<const TestCase> tests,
                                      std::span<const ModelSpec> muts, const RunOptions& options = {});

nlohmann::json to_json(const TestRunResult& r);
TestRunResult run_result_from_json(const nlohmann::json& j);

std::string results_to_jsonl(std::span<const TestRunResult> results);
std::vector<TestRunResult> results_from_jsonl(std::string_view text);

}  // namespace promptunit
