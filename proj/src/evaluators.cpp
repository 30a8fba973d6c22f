#include "promptunit/evaluators.hpp"

#include <map>

#include "promptunit/error.hpp"
#include "promptunit/parallel.hpp"
#include "promptunit/resources.hpp"

namespace promptunit {

using nlohmann::json;

namespace {

Verdict to_verdict(const std::string& raw, const ModelSpec& judge) {
  auto core = parse_verdict(raw);
  return {core.decision, std::move(core.explanation), judge.id, raw};
}

}  // namespace

std::vector<Message> compliance_judge_messages(const PromptUnderTest& put, std::string_view output) {
  return render(meta_template(TemplateId::ComplianceJudge),
                {{"system", prompt_text(put)}, {"result", std::string(output)}});
}

Verdict judge_compliance(const PromptUnderTest& put, const TestRunResult& run, const ModelClient& judge) {
  if (!run.output_text) throw std::invalid_argument("judge_compliance: run has no output");
  return to_verdict(judge.ask(compliance_judge_messages(put, *run.output_text)), judge.model);
}

Verdict judge_validity(const InputSpec& is, TestCase& test, const ModelClient& judge) {
  if (is.statements.empty()) throw std::invalid_argument("judge_validity: empty input specification");
  std::string spec;
  for (const auto& s : is.statements) spec += (spec.empty() ? "" : "\n") + s;
  auto v = to_verdict(
      judge.ask(render(meta_template(TemplateId::ValidityJudge), {{"input_spec", spec}, {"test", test.test_input}})),
      judge.model);
  test.validity = v.decision == Decision::Ok ? Validity::Valid : Validity::Invalid;
  test.validity_explanation = v.explanation;
  return v;
}

std::vector<std::optional<Verdict>> judge_validity_all(const InputSpec& is, std::vector<TestCase>& tests,
                                                       const ModelClient& judge) {
  std::vector<std::optional<Verdict>> out(tests.size());
  parallel_for(tests.size(), judge.parallelism, [&](std::size_t i) {
    try {
      out[i] = judge_validity(is, tests[i], judge);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableVerdict) throw;
      tests[i].validity = Validity::Unknown;
      tests[i].validity_explanation = e.what();
    }
  });
  return out;
}

std::vector<EvalRecord> evaluate_runs(const PromptUnderTest& put, std::span<const TestRunResult> runs,
                                      std::span<const TestCase> tests,
                                      std::span<const std::optional<Verdict>> validity, const RuleSet* rules,
                                      const ModelClient& judge) {
  std::map<std::string, std::size_t, std::less<>> by_uid;
  for (std::size_t i = 0; i < tests.size(); ++i) by_uid.emplace(tests[i].test_uid, i);

  std::vector<EvalRecord> out(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto& rec = out[i];
    rec.run = runs[i];
    auto it = by_uid.find(runs[i].test_uid);
    if (it == by_uid.end()) {
      throw Error(ErrorCode::MalformedArtifact, "result for unknown test " + runs[i].test_uid);
    }
    const auto& t = tests[it->second];
    rec.test.generator = t.generator;
    rec.test.rule_id = t.rule_id;
    if (t.rule_id && rules != nullptr) {
      const auto* rule = rules->find(*t.rule_id);
      if (rule == nullptr) throw Error(ErrorCode::DanglingRuleId, t.test_uid);
      rec.test.rule_kind = rule->kind;
    }
    if (it->second < validity.size()) rec.validity = validity[it->second];
  }

  parallel_for(out.size(), judge.parallelism, [&](std::size_t i) {
    auto& rec = out[i];
    if (!rec.run.output_text) return;
    try {
      rec.compliance = judge_compliance(put, rec.run, judge);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparseableVerdict) throw;
      rec.judge_error = e.what();
    }
  });
  return out;
}

json to_json(const Verdict& v) {
  return {{"decision", to_string(v.decision)},
          {"explanation", v.explanation},
          {"judge_model", v.judge_model},
          {"raw_text", v.raw_text}};
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  const auto d = j.at("decision").get<std::string>();
  if (d == "OK") v.decision = Decision::Ok;
  else if (d == "ERR") v.decision = Decision::Err;
  else throw Error(ErrorCode::MalformedArtifact, "unknown decision `" + d + "`");
  v.explanation = j.value("explanation", "");
  v.judge_model = j.value("judge_model", "");
  v.raw_text = j.value("raw_text", "");
  return v;
}

json to_json(const EvalRecord& r) {
  json test = {
      {"generator", to_string(r.test.generator)},
      {"rule_id", r.test.rule_id ? json(*r.test.rule_id) : json(nullptr)},
      {"rule_kind", r.test.rule_kind ? json(to_string(*r.test.rule_kind)) : json(nullptr)},
  };
  return {
      {"run", to_json(r.run)},
      {"test", std::move(test)},
      {"compliance", r.compliance ? to_json(*r.compliance) : json(nullptr)},
      {"judge_error", r.judge_error ? json(*r.judge_error) : json(nullptr)},
      {"validity", r.validity ? to_json(*r.validity) : json(nullptr)},
  };
}

EvalRecord eval_record_from_json(const json& j) {
  try {
    EvalRecord r;
    r.run = run_result_from_json(j.at("run"));
    const auto& t = j.at("test");
    const auto gen = t.at("generator").get<std::string>();
    r.test.generator = gen == "baseline" ? Generator::Baseline : Generator::RuleBased;
    if (!t["rule_id"].is_null()) r.test.rule_id = t["rule_id"].get<int>();
    if (!t["rule_kind"].is_null()) {
      r.test.rule_kind = t["rule_kind"].get<std::string>() == "inverse" ? RuleKind::Inverse : RuleKind::Extracted;
    }
    if (!j.at("compliance").is_null()) r.compliance = verdict_from_json(j["compliance"]);
    if (j.contains("judge_error") && !j["judge_error"].is_null()) r.judge_error = j["judge_error"].get<std::string>();
    if (j.contains("validity") && !j["validity"].is_null()) r.validity = verdict_from_json(j["validity"]);
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedArtifact, std::string("eval record: ") + e.what());
  }
}

std::string evals_to_jsonl(std::span<const EvalRecord> records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

std::vector<EvalRecord> evals_from_jsonl(std::string_view text) {
  std::vector<EvalRecord> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::MalformedArtifact, "evals: bad JSON line");
    out.push_back(eval_record_from_json(j));
  }
  return out;
}

}  // namespace promptunit
