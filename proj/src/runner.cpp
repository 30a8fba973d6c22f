#include "promptunit/runner.hpp"

#include "promptunit/io.hpp"
#include "promptunit/parallel.hpp"

namespace promptunit {

using nlohmann::json;

namespace {

ErrorCode code_from_string(std::string_view s) {
  for (int c = 0; c <= static_cast<int>(ErrorCode::Io); ++c) {
    if (to_string(static_cast<ErrorCode>(c)) == s) return static_cast<ErrorCode>(c);
  }
  return ErrorCode::ProviderError;
}

}  // namespace

std::vector<TestRunResult> run_matrix(Gateway& gateway, const PromptUnderTest& put, std::span<const TestCase> tests,
                                      std::span<const ModelSpec> muts, const RunOptions& options) {
  if (tests.empty()) throw std::invalid_argument("run_matrix: no tests");
  if (muts.empty()) throw std::invalid_argument("run_matrix: no models");
  if (options.repeats < 1) throw std::invalid_argument("run_matrix: repeats must be >= 1");

  const std::size_t reps = static_cast<std::size_t>(options.repeats);
  std::vector<TestRunResult> results(tests.size() * muts.size() * reps);

  parallel_for(results.size(), options.parallelism, [&](std::size_t cell) {
    const auto& test = tests[cell / (muts.size() * reps)];
    const auto& model = muts[(cell / reps) % muts.size()];
    const int repeat = static_cast<int>(cell % reps) + 1;

    auto& r = results[cell];
    r.test_uid = test.test_uid;
    r.model_id = model.id;
    r.repeat = repeat;
    const auto messages = render_with_input(put, test.test_input);
    r.messages_digest = sha256_hex(prompt_text(messages));

    auto policy = options.policy;
    if (repeat > 1) policy.cache_salt = "repeat=" + std::to_string(repeat);
    try {
      auto ex = gateway.complete(model, messages, policy);
      r.output_text = std::move(ex.response.text);
      r.latency = ex.response.latency;
      r.usage = ex.response.usage;
    } catch (const ProviderError& e) {
      r.error = CellError{e.code(), e.status(), e.body()};
    } catch (const Error& e) {
      r.error = CellError{e.code(), 0, e.what()};
    } catch (const std::exception& e) {
      r.error = CellError{ErrorCode::ProviderError, 0, e.what()};
    }
  });
  return results;
}

json to_json(const TestRunResult& r) {
  json j = {
      {"test_uid", r.test_uid},
      {"model_id", r.model_id},
      {"repeat", r.repeat},
      {"messages_digest", r.messages_digest},
      {"output_text", r.output_text ? json(*r.output_text) : json(nullptr)},
      {"latency_ms", r.latency.count()},
      {"usage",
       {{"prompt_tokens", r.usage.prompt_tokens},
        {"completion_tokens", r.usage.completion_tokens},
        {"total_tokens", r.usage.total_tokens}}},
      {"error", nullptr},
  };
  if (r.error) {
    j["error"] = {{"code", to_string(r.error->code)}, {"status", r.error->status}, {"message", r.error->message}};
  }
  return j;
}

TestRunResult run_result_from_json(const json& j) {
  try {
    TestRunResult r;
    r.test_uid = j.at("test_uid").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.repeat = j.value("repeat", 1);
    r.messages_digest = j.value("messages_digest", "");
    if (j.contains("output_text") && !j["output_text"].is_null()) r.output_text = j["output_text"].get<std::string>();
    r.latency = std::chrono::milliseconds(j.value("latency_ms", 0));
    if (j.contains("usage")) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
      r.usage.total_tokens = j["usage"].value("total_tokens", 0);
    }
    if (j.contains("error") && !j["error"].is_null()) {
      const auto& e = j["error"];
      r.error = CellError{code_from_string(e.value("code", "")), e.value("status", 0), e.value("message", "")};
    }
    if (r.output_text.has_value() == r.error.has_value()) {
      throw Error(ErrorCode::MalformedArtifact, r.test_uid + ": exactly one of output_text and error must be set");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedArtifact, std::string("result record: ") + e.what());
  }
}

std::string results_to_jsonl(std::span<const TestRunResult> results) {
  std::string out;
  for (const auto& r : results) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<TestRunResult> results_from_jsonl(std::string_view text) {
  std::vector<TestRunResult> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedArtifact, "results: bad JSON line");
    out.push_back(run_result_from_json(j));
  }
  return out;
}

}  // namespace promptunit
