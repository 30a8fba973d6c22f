#include <gtest/gtest.h>

#include "promptunit/error.hpp"
#include "promptunit/spec_extractor.hpp"
#include "support.hpp"

using namespace promptunit;
using pu_test::FakeTransport;

namespace {

struct Meta {
  Gateway gw;
  std::shared_ptr<FakeTransport> transport;
  ModelClient client;

  explicit Meta(FakeTransport::Handler h)
      : transport(std::make_shared<FakeTransport>(std::move(h))),
        client(pu_test::fake_client(gw, "meta", transport)) {}
};

Meta replying(std::string reply) {
  return Meta([reply](auto) { return reply; });
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

RuleSet extracted_rules(std::vector<std::string> texts) {
  RuleSet s;
  s.put_id = "p";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    OutputRule r;
    r.rule_id = static_cast<int>(i + 1);
    r.text = texts[i];
    s.rules.push_back(r);
  }
  return s;
}

}  // namespace

TEST(ReplyLines, StripsBulletsNumbersAndFences) {
  EXPECT_EQ(reply_lines("```\n- one\n* two\n\n3. three\n4) four\n• five\n-not a bullet\n```\n"),
            (std::vector<std::string>{"one", "two", "three", "four", "five", "-not a bullet"}));
  EXPECT_TRUE(reply_lines("  \n\n").empty());
  EXPECT_EQ(reply_lines("2024 was a year"), std::vector<std::string>{"2024 was a year"});
}

TEST(InputSpecExtraction, DashesStrippedAndTemplateRendered) {
  auto m = replying("- The input is a sentence.\n- It ends with a word.\n- The word is in the sentence.\n");
  const auto put = pu_test::pos_prompt();
  const auto is = extract_input_spec(put, m.client);
  EXPECT_EQ(is.statements.size(), 3u);
  EXPECT_EQ(is.statements[0], "The input is a sentence.");
  EXPECT_EQ(is.provenance, Provenance::Extracted);
  EXPECT_EQ(is.source_put, put.id);
  const auto sent = pu_test::joined(m.transport->requests().at(0));
  EXPECT_NE(sent.find(put.messages[0].text), std::string::npos);
  EXPECT_EQ(sent.find("{{context}}"), std::string::npos);
}

TEST(InputSpecExtraction, EmptyReply) {
  auto m = replying("");
  EXPECT_EQ(code_of([&] { extract_input_spec(pu_test::pos_prompt(), m.client); }), ErrorCode::EmptyExtraction);
}

TEST(OutputRuleExtraction, IdsAndBranches) {
  auto m = replying("Rule A\nRule B\n");
  const auto set = extract_output_rules(pu_test::pos_prompt(), m.client, 2);
  ASSERT_EQ(set.size(), 2u);
  EXPECT_EQ(set.rules[0].rule_id, 1);
  EXPECT_EQ(set.rules[1].rule_id, 2);
  EXPECT_EQ(set.rules[1].kind, RuleKind::Extracted);
  EXPECT_EQ(set.rules[1].grounded, Groundedness::Unknown);

  extract_output_rules(pu_test::pos_prompt(), m.client);
  const auto reqs = m.transport->requests();
  const auto with_n = pu_test::joined(reqs.at(0));
  const auto all = pu_test::joined(reqs.at(1));
  EXPECT_NE(with_n, all);
  EXPECT_NE(with_n.find('2'), std::string::npos);
  EXPECT_EQ(with_n.find("{{num_rules}}"), std::string::npos);
  EXPECT_EQ(with_n.find("{{input_data}}"), std::string::npos);
  EXPECT_EQ(all.find("{{input_data}}"), std::string::npos);
}

TEST(OutputRuleExtraction, EmptyReply) {
  auto m = replying("\n\n");
  EXPECT_EQ(code_of([&] { extract_output_rules(pu_test::pos_prompt(), m.client); }), ErrorCode::EmptyExtraction);
}

TEST(InvertRules, SingleRuleLinkage) {
  auto m = replying("X\n");
  const auto out = invert_rules(extracted_rules({"only tags"}), m.client);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.rules[1].text, "X");
  EXPECT_EQ(out.rules[1].kind, RuleKind::Inverse);
  EXPECT_EQ(out.rules[1].inverse_of, 1);
  EXPECT_NO_THROW(out.validate());
}

TEST(InvertRules, OneRequestWithAllRules) {
  auto m = replying("i1\ni2\ni3\n");
  invert_rules(extracted_rules({"r-one", "r-two", "r-three"}), m.client);
  ASSERT_EQ(m.transport->calls(), 1);
  const auto sent = pu_test::joined(m.transport->requests()[0]);
  EXPECT_NE(sent.find("r-one\nr-two\nr-three"), std::string::npos);
}

TEST(InvertRules, CountMismatch) {
  auto m = replying("a\nb\nc\n");
  EXPECT_EQ(code_of([&] { invert_rules(extracted_rules({"1", "2", "3", "4"}), m.client); }),
            ErrorCode::CountMismatch);
}

TEST(InvertRules, ExistingInversesAreReplaced) {
  auto m = replying("first inverse\n");
  const auto once = invert_rules(extracted_rules({"rule"}), m.client);
  auto m2 = replying("second inverse\n");
  const auto twice = invert_rules(once, m2.client);
  ASSERT_EQ(twice.size(), 2u);
  EXPECT_EQ(twice.rules[1].text, "second inverse");
}

TEST(Groundedness, VerdictMappingAndInversesSkipped) {
  Meta m([](auto msgs) {
    const auto text = pu_test::joined(msgs);
    return text.find("made up") != std::string::npos ? std::string("not in the prompt\nERR") : std::string("OK");
  });
  auto m_inv = replying("inverse one\ninverse two\n");
  const auto rules = invert_rules(extracted_rules({"real rule", "made up rule"}), m_inv.client);
  const auto judged = check_groundedness(rules, pu_test::pos_prompt(), m.client);
  EXPECT_EQ(m.transport->calls(), 2);
  EXPECT_EQ(judged.rules[0].grounded, Groundedness::Grounded);
  EXPECT_EQ(judged.rules[1].grounded, Groundedness::NotGrounded);
  EXPECT_EQ(judged.rules[1].groundedness_explanation, "not in the prompt\nERR");
  EXPECT_EQ(judged.rules[2].grounded, Groundedness::Unknown);
  EXPECT_EQ(judged.rules[3].grounded, Groundedness::Unknown);
}

TEST(Groundedness, UnparseableVerdict) {
  auto m = replying("maybe");
  EXPECT_EQ(code_of([&] { check_groundedness(extracted_rules({"r"}), pu_test::pos_prompt(), m.client); }),
            ErrorCode::UnparseableVerdict);
}

TEST(TaskSpec, PassthroughAndEmpty) {
  auto m = replying("  Summarize text.\n");
  EXPECT_EQ(extract_task_spec(pu_test::pos_prompt(), m.client).intent_text, "Summarize text.");
  auto blank = replying(" \n\t");
  EXPECT_EQ(code_of([&] { extract_task_spec(pu_test::pos_prompt(), blank.client); }), ErrorCode::EmptyExtraction);
}

TEST(SpecPrompt, OrderDeterminismAndInverseExclusion) {
  auto rules = extracted_rules({"R1", "R2"});
  OutputRule inv;
  inv.rule_id = 3;
  inv.text = "INVERSE";
  inv.kind = RuleKind::Inverse;
  inv.inverse_of = 1;
  rules.rules.push_back(inv);
  const TaskSpec task{"T.", "p"};
  const auto a = build_spec_prompt(task, rules);
  const auto b = build_spec_prompt(task, rules);
  EXPECT_EQ(serialize_prompt(a), serialize_prompt(b));
  const auto& sys = a.messages.at(0).text;
  const auto t = sys.find("T."), r1 = sys.find("R1"), r2 = sys.find("R2");
  ASSERT_NE(t, std::string::npos);
  EXPECT_LT(t, r1);
  EXPECT_LT(r1, r2);
  EXPECT_EQ(sys.find("INVERSE"), std::string::npos);
  EXPECT_EQ(a.placeholders.size(), 1u);
  EXPECT_EQ(parse_prompt_file(serialize_prompt(a)), a);
}

TEST(Artifacts, InputSpecRoundTrip) {
  InputSpec is{{"one", "two words", "ünïcode"}, Provenance::Extracted, "p"};
  EXPECT_EQ(parse_input_spec(serialize_input_spec(is), "p"), is);
  EXPECT_EQ(parse_input_spec("\n  a  \r\n\nb", "").statements, (std::vector<std::string>{"a", "b"}));
}

TEST(Artifacts, RulesJsonRoundTrip) {
  auto m = replying("inv\n");
  auto rules = invert_rules(extracted_rules({"keep"}), m.client);
  rules.rules[0].grounded = Groundedness::NotGrounded;
  rules.rules[0].groundedness_explanation = "why\nERR";
  EXPECT_EQ(rules_from_json(rules_to_json(rules), "p"), rules);
}

TEST(Artifacts, RulesValidation) {
  auto j = nlohmann::json::parse(R"([{"rule_id":1,"text":"a"},{"rule_id":1,"text":"b"}])");
  EXPECT_EQ(code_of([&] { rules_from_json(j); }), ErrorCode::MalformedArtifact);
  j = nlohmann::json::parse(R"([{"rule_id":1,"text":"a"},{"rule_id":2,"text":"b","kind":"inverse","inverse_of":7}])");
  EXPECT_EQ(code_of([&] { rules_from_json(j); }), ErrorCode::MalformedArtifact);
  j = nlohmann::json::parse(R"({"rule_id":1})");
  EXPECT_EQ(code_of([&] { rules_from_json(j); }), ErrorCode::MalformedArtifact);
}
