#include <gtest/gtest.h>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"
#include "promptunit/test_generator.hpp"
#include "support.hpp"

using namespace promptunit;

namespace {

RuleSet rules_with_inverses(int n) {
  RuleSet s;
  s.put_id = "p";
  for (int i = 1; i <= n; ++i) s.rules.push_back({i, "rule " + std::to_string(i), RuleKind::Extracted, {}, {}, {}});
  for (int i = 1; i <= n; ++i) {
    s.rules.push_back({n + i, "inverse " + std::to_string(i), RuleKind::Inverse, i, {}, {}});
  }
  return s;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

}  // namespace

TEST(RuleTests, PosFixtureSalvagesGoodRows) {
  const auto csv = read_file(pu_test::kDataDir / "pos" / "rule_tests.csv");
  const auto r = parse_rule_tests(csv, rules_with_inverses(4));
  EXPECT_EQ(r.tests.size(), 15u);
  ASSERT_EQ(r.diagnostics.size(), 1u);
  EXPECT_NE(r.diagnostics[0].message.find("expected 5 fields"), std::string::npos);
  for (const auto& t : r.tests) {
    EXPECT_EQ(t.generator, Generator::RuleBased);
    ASSERT_TRUE(t.rule_id);
    EXPECT_EQ(t.test_uid, "rule-" + std::to_string(*t.rule_id) + "-" + std::to_string(t.seq));
  }
  EXPECT_EQ(r.tests[0].test_input, "sentence: The dog runs quickly.; word: runs");
  EXPECT_EQ(r.tests[0].expected_output_hint, "VBZ");
}

TEST(RuleTests, QuotedCommaFenceAndUnknownRule) {
  const auto r = parse_rule_tests(
      "```csv\n"
      "1, 1, \"input, with comma\", \"exp\", \"why\"\n"
      "99, 1, \"orphan\", \"\", \"\"\n"
      "x, 1, \"bad id\", \"\", \"\"\n"
      "1, 2, \"\", \"\", \"\"\n"
      "1, 3, \"second\", \"\", \"\"\n"
      "```\n",
      rules_with_inverses(1));
  ASSERT_EQ(r.tests.size(), 2u);
  EXPECT_EQ(r.tests[0].test_input, "input, with comma");
  EXPECT_EQ(r.tests[0].reasoning, "why");
  EXPECT_EQ(r.tests[1].seq, 2);
  EXPECT_FALSE(r.tests[1].expected_output_hint);
  EXPECT_EQ(r.diagnostics.size(), 3u);
}

TEST(RuleTests, NothingUsable) {
  EXPECT_EQ(code_of([] { parse_rule_tests("ruleid, testid, testinput, expectedoutput, reasoning\n", rules_with_inverses(1)); }),
            ErrorCode::CsvUnparseable);
  EXPECT_EQ(code_of([] { parse_rule_tests("just prose", rules_with_inverses(1)); }), ErrorCode::CsvUnparseable);
}

TEST(RuleTests, OneRequestRendersAllRulesAndCounts) {
  Gateway gw;
  auto transport = std::make_shared<pu_test::FakeTransport>([](auto) {
    return std::string("1, 1, \"a\", \"\", \"\"\n3, 1, \"b\", \"\", \"\"\n");
  });
  const auto meta = pu_test::fake_client(gw, "meta", transport);
  InputSpec is{{"IS line one", "IS line two"}, Provenance::Extracted, "p"};
  const auto r = generate_rule_tests(pu_test::pos_prompt(), is, rules_with_inverses(2), 3, meta);
  EXPECT_EQ(transport->calls(), 1);
  EXPECT_EQ(r.expected, 12u);
  EXPECT_EQ(r.tests.size(), 2u);
  const auto sent = pu_test::joined(transport->requests()[0]);
  for (const auto* s : {"rule 1", "rule 2", "inverse 1", "inverse 2", "IS line one", "IS line two"}) {
    EXPECT_NE(sent.find(s), std::string::npos) << s;
  }
  for (const auto* slot : {"{{rule}}", "{{context}}", "{{input_spec}}", "{{num}}", "{{num_rules}}"}) {
    EXPECT_EQ(sent.find(slot), std::string::npos) << slot;
  }
}

TEST(BaselineTests, DelimiterSplit) {
  const auto r = parse_baseline_tests("a\n===\nb\n===\nc");
  ASSERT_EQ(r.tests.size(), 3u);
  EXPECT_EQ(r.tests[0].test_input, "a");
  EXPECT_EQ(r.tests[2].test_input, "c");
  EXPECT_EQ(r.tests[2].seq, 3);
  EXPECT_EQ(r.tests[2].test_uid, "baseline-3");
  EXPECT_FALSE(r.tests[0].rule_id);
  EXPECT_EQ(r.tests[0].generator, Generator::Baseline);
}

TEST(BaselineTests, TrailingDelimiterAndMultiline) {
  const auto r = parse_baseline_tests("first line\nsecond line\n  ===  \n\n===\nlast\n===\n");
  ASSERT_EQ(r.tests.size(), 2u);
  EXPECT_EQ(r.tests[0].test_input, "first line\nsecond line");
  EXPECT_EQ(r.tests[1].test_input, "last");
}

TEST(BaselineTests, SingleAndEmpty) {
  EXPECT_EQ(parse_baseline_tests("only one test").tests.size(), 1u);
  EXPECT_EQ(code_of([] { parse_baseline_tests("===\n \n===\n"); }), ErrorCode::EmptyGeneration);
}

TEST(Partition, ByRuleKind) {
  const auto rules = rules_with_inverses(4);
  std::vector<TestCase> tests;
  auto add = [&](std::optional<int> rule, Generator g) {
    TestCase t;
    t.generator = g;
    t.rule_id = rule;
    t.test_input = "x";
    t.test_uid = "t" + std::to_string(tests.size());
    tests.push_back(t);
  };
  add(1, Generator::RuleBased);
  add(5, Generator::RuleBased);
  add(1, Generator::RuleBased);
  add({}, Generator::Baseline);
  add(5, Generator::RuleBased);
  const auto p = partition_by_rule_kind(tests, rules);
  ASSERT_EQ(p.from_extracted.size(), 2u);
  ASSERT_EQ(p.from_inverse.size(), 2u);
  EXPECT_EQ(p.from_extracted[0].test_uid, "t0");
  EXPECT_EQ(p.from_extracted[1].test_uid, "t2");
  EXPECT_EQ(p.from_inverse[1].test_uid, "t4");

  add(99, Generator::RuleBased);
  EXPECT_EQ(code_of([&] { partition_by_rule_kind(tests, rules); }), ErrorCode::DanglingRuleId);
}

TEST(TestArtifacts, JsonlRoundTrip) {
  TestCase a;
  a.test_uid = "rule-1-1";
  a.rule_id = 1;
  a.seq = 1;
  a.test_input = "multi\nline \"quoted\"";
  a.expected_output_hint = "NN";
  a.validity = Validity::Invalid;
  a.validity_explanation = "bad";
  TestCase b;
  b.test_uid = "baseline-1";
  b.generator = Generator::Baseline;
  b.seq = 1;
  b.test_input = "plain";
  const std::vector<TestCase> tests{a, b};
  const auto text = tests_to_jsonl(tests);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(tests_from_jsonl(text), tests);
  EXPECT_EQ(code_of([] { tests_from_jsonl("{not json}\n"); }), ErrorCode::MalformedArtifact);
  EXPECT_EQ(code_of([] { tests_from_jsonl(R"({"test_uid":"x","generator":"baseline","rule_id":1,"test_input":"y"})"); }),
            ErrorCode::MalformedArtifact);
}

TEST(TestArtifacts, CsvExportParsesBack) {
  const auto rules = rules_with_inverses(2);
  const auto original = parse_rule_tests(
      "1, 1, \"a, b\", \"e\", \"r\"\n4, 1, \"c \"\"d\"\"\", \"\", \"why\"\n1, 2, \"z\", \"\", \"\"\n", rules);
  const auto csv = tests_to_csv(original.tests);
  EXPECT_TRUE(csv.starts_with("ruleid, testid, testinput, expectedoutput, reasoning\n"));
  const auto again = parse_rule_tests(csv, rules);
  EXPECT_TRUE(again.diagnostics.empty());
  EXPECT_EQ(again.tests, original.tests);
}
