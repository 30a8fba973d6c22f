#include <random>

#include <gtest/gtest.h>

#include "promptunit/error.hpp"
#include "promptunit/evaluators.hpp"
#include "support.hpp"

using namespace promptunit;
using pu_test::FakeTransport;

namespace {

struct Judge {
  Gateway gw;
  std::shared_ptr<FakeTransport> transport;
  ModelClient client;

  explicit Judge(FakeTransport::Handler h)
      : transport(std::make_shared<FakeTransport>(std::move(h))),
        client(pu_test::fake_client(gw, "judge", transport)) {}
};

TestCase test_case(std::string uid, std::string input, std::optional<int> rule = {}) {
  TestCase t;
  t.test_uid = std::move(uid);
  t.generator = rule ? Generator::RuleBased : Generator::Baseline;
  t.rule_id = rule;
  t.test_input = std::move(input);
  return t;
}

TestRunResult run_of(const std::string& uid, std::optional<std::string> output, std::string model = "m") {
  TestRunResult r;
  r.test_uid = uid;
  r.model_id = std::move(model);
  r.output_text = std::move(output);
  if (!r.output_text) r.error = CellError{ErrorCode::ProviderError, 500, "x"};
  return r;
}

}  // namespace

TEST(ComplianceJudge, TranscriptHasPromptAndOutputOnly) {
  const auto put = pu_test::pos_prompt();
  const auto msgs = compliance_judge_messages(put, "NNP");
  const auto text = pu_test::joined(msgs);
  EXPECT_NE(text.find(put.messages[0].text), std::string::npos);
  EXPECT_NE(text.find("NNP"), std::string::npos);
  EXPECT_EQ(text.find("{{system}}"), std::string::npos);
  EXPECT_EQ(text.find("{{result}}"), std::string::npos);
}

TEST(ComplianceJudge, VerdictCarriesJudgeAndRaw) {
  Judge j([](auto) { return std::string("Has extra words.\nERR"); });
  const auto v = judge_compliance(pu_test::pos_prompt(), run_of("t", "NN because"), j.client);
  EXPECT_EQ(v.decision, Decision::Err);
  EXPECT_EQ(v.explanation, "Has extra words.");
  EXPECT_EQ(v.judge_model, "judge");
  EXPECT_EQ(v.raw_text, "Has extra words.\nERR");
  EXPECT_THROW(judge_compliance(pu_test::pos_prompt(), run_of("t", std::nullopt), j.client), std::invalid_argument);
}

// Random cells: the request sent to the judge never contains the test input.
TEST(ComplianceJudge, InputNeverReachesJudge) {
  std::mt19937 rng(11);
  Judge j([](auto) { return std::string("OK"); });
  const auto put = pu_test::pos_prompt();
  std::vector<TestCase> tests;
  std::vector<TestRunResult> runs;
  std::vector<std::string> markers;
  for (int i = 0; i < 50; ++i) {
    const auto& marker = markers.emplace_back("zq" + std::to_string(rng()) + "x");
    tests.push_back(test_case("t" + std::to_string(i), "sentence with " + marker + "; " + marker));
    runs.push_back(run_of(tests.back().test_uid, "TAG" + std::to_string(i)));
  }
  const auto recs = evaluate_runs(put, runs, tests, {}, nullptr, j.client);
  const auto reqs = j.transport->requests();
  ASSERT_EQ(reqs.size(), tests.size());
  for (const auto& req : reqs) {
    const auto text = pu_test::joined(req);
    EXPECT_NE(text.find(put.messages[0].text), std::string::npos);
    for (const auto& m : markers) EXPECT_EQ(text.find(m), std::string::npos);
  }
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_NE(pu_test::joined(compliance_judge_messages(put, *runs[i].output_text)).find(*runs[i].output_text),
              std::string::npos);
  }
}

TEST(ValidityJudge, MapsVerdictToValidity) {
  Judge j([](auto msgs) {
    return pu_test::joined(msgs).find("bad input") != std::string::npos ? std::string("no word\nERR")
                                                                      : std::string("OK");
  });
  InputSpec is{{"A sentence and a word."}, Provenance::Extracted, "p"};
  std::vector<TestCase> tests{test_case("a", "good input; word"), test_case("b", "bad input")};
  const auto out = judge_validity_all(is, tests, j.client);
  EXPECT_EQ(tests[0].validity, Validity::Valid);
  EXPECT_EQ(tests[1].validity, Validity::Invalid);
  EXPECT_EQ(tests[1].validity_explanation, "no word");
  ASSERT_TRUE(out[1]);
  EXPECT_EQ(out[1]->decision, Decision::Err);
  const auto sent = pu_test::joined(j.transport->requests()[0]);
  EXPECT_NE(sent.find("A sentence and a word."), std::string::npos);
}

TEST(ValidityJudge, UnparseableLeavesUnknown) {
  Judge j([](auto) { return std::string("not sure"); });
  InputSpec is{{"x"}, Provenance::Extracted, "p"};
  std::vector<TestCase> tests{test_case("a", "in")};
  tests[0].validity = Validity::Valid;
  const auto out = judge_validity_all(is, tests, j.client);
  EXPECT_FALSE(out[0]);
  EXPECT_EQ(tests[0].validity, Validity::Unknown);
}

TEST(EvaluateRuns, LinkageFailuresAndUnparseable) {
  Judge j([](auto msgs) {
    const auto text = pu_test::joined(msgs);
    if (text.find("garbled") != std::string::npos) return std::string("hmm");
    return std::string("OK");
  });
  RuleSet rules;
  rules.rules.push_back({1, "r", RuleKind::Extracted, {}, {}, {}});
  rules.rules.push_back({2, "inv", RuleKind::Inverse, 1, {}, {}});
  const std::vector<TestCase> tests{test_case("rule-2-1", "i1", 2), test_case("baseline-1", "i2")};
  const std::vector<TestRunResult> runs{run_of("rule-2-1", "NN"), run_of("rule-2-1", std::nullopt, "m2"),
                                        run_of("baseline-1", "garbled")};
  const std::vector<std::optional<Verdict>> validity{Verdict{Decision::Ok, "", "judge", "OK"}, std::nullopt};
  const auto recs = evaluate_runs(pu_test::pos_prompt(), runs, tests, validity, &rules, j.client);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(j.transport->calls(), 2);

  EXPECT_TRUE(recs[0].evaluated());
  EXPECT_EQ(recs[0].test.rule_kind, RuleKind::Inverse);
  EXPECT_EQ(recs[0].test.rule_id, 2);
  ASSERT_TRUE(recs[0].validity);

  EXPECT_FALSE(recs[1].evaluated());
  EXPECT_FALSE(recs[1].judge_error);

  EXPECT_FALSE(recs[2].evaluated());
  EXPECT_TRUE(recs[2].judge_error);
  EXPECT_EQ(recs[2].test.generator, Generator::Baseline);
  EXPECT_FALSE(recs[2].validity);

  const std::vector<TestRunResult> orphan{run_of("nope", "x")};
  EXPECT_THROW(evaluate_runs(pu_test::pos_prompt(), orphan, tests, {}, &rules, j.client), Error);
}

TEST(EvalRecords, JsonlRoundTrip) {
  EvalRecord a;
  a.run = run_of("rule-1-1", "out");
  a.test = {Generator::RuleBased, 1, RuleKind::Extracted};
  a.compliance = Verdict{Decision::Err, "why", "judge", "why\nERR"};
  a.validity = Verdict{Decision::Ok, "", "judge", "OK"};
  EvalRecord b;
  b.run = run_of("baseline-1", "out2");
  b.test = {Generator::Baseline, {}, {}};
  b.judge_error = "unparseable";
  const std::vector<EvalRecord> recs{a, b};
  const auto back = evals_from_jsonl(evals_to_jsonl(recs));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(to_json(back[i]), to_json(recs[i]));
    EXPECT_EQ(back[i].test, recs[i].test);
    EXPECT_EQ(back[i].compliance, recs[i].compliance);
  }
}
