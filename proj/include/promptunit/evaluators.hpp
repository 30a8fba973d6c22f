#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptunit/model_client.hpp"
#include "promptunit/runner.hpp"
#include "promptunit/spec_extractor.hpp"
#include "promptunit/test_generator.hpp"
#include "promptunit/verdict.hpp"

namespace promptunit {

struct Verdict {
  Decision decision = Decision::Ok;
  std::string explanation;
  std::string judge_model;
  std::string raw_text;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// What metrics need to know about the test behind a run, copied in at
/// evaluation time so eval records stand alone.
struct TestMeta {
  Generator generator = Generator::RuleBased;
  std::optional<int> rule_id;
  std::optional<RuleKind> rule_kind;

  friend bool operator==(const TestMeta&, const TestMeta&) = default;
};

/// A judged run. `compliance` is absent when the run failed or the judge
/// reply could not be parsed; the latter is recorded in `judge_error` and the
/// cell counts as unevaluated.
struct EvalRecord {
  TestRunResult run;
  TestMeta test;
  std::optional<Verdict> compliance;
  std::optional<std::string> judge_error;
  std::optional<Verdict> validity;

  [[nodiscard]] bool evaluated() const noexcept { return compliance.has_value(); }
};

/// The compliance-judge transcript for one output. The test input is never
/// part of it.
std::vector<Message> compliance_judge_messages(const PromptUnderTest& put, std::string_view output);

Verdict judge_compliance(const PromptUnderTest& put, const TestRunResult& run, const ModelClient& judge);

/// Judges the test input against the input specification and records the
/// outcome on `test` (OK -> valid, ERR -> invalid).
Verdict judge_validity(const InputSpec& is, TestCase& test, const ModelClient& judge);

/// Validity for every test, fanned out through the judge client. Unparseable
/// replies leave the test's validity unknown.
std::vector<std::optional<Verdict>> judge_validity_all(const InputSpec& is, std::vector<TestCase>& tests,
                                                       const ModelClient& judge);

/// Compliance for every run. `tests` supplies generator/rule linkage and
/// validity; `rules` resolves rule kinds (may be null for baseline-only runs).
std::vector<EvalRecord> evaluate_runs(const PromptUnderTest& put, std::span<const TestRunResult> runs,
                                      std::span<const TestCase> tests,
                                      std::span<const std::optional<Verdict>> validity, const RuleSet* rules,
                                      const ModelClient& judge);

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvalRecord& r);
EvalRecord eval_record_from_json(const nlohmann::json& j);

std::string evals_to_jsonl(std::span<const EvalRecord> records);
std::vector<EvalRecord> evals_from_jsonl(std::string_view text);

}  // namespace promptunit
