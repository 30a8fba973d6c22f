#include <gtest/gtest.h>

#include "promptunit/error.hpp"
#include "promptunit/resources.hpp"

using namespace promptunit;

TEST(Benchmarks, EightFixturesInTableOrder) {
  const auto all = list_benchmarks();
  std::vector<std::string> ids;
  for (const auto& p : all) ids.push_back(p.id);
  EXPECT_EQ(ids, (std::vector<std::string>{"speech-tag", "text-to-p", "shakespeare", "sentence", "extract-names",
                                           "elements", "classify", "art-prompt"}));
}

TEST(Benchmarks, EveryFixtureHasOneInput) {
  for (const auto& p : list_benchmarks()) EXPECT_EQ(p.placeholders.size(), 1u) << p.id;
}

TEST(Benchmarks, ClassifyStartsWithNewsArticle) {
  const auto p = find_benchmark("classify");
  ASSERT_FALSE(p.messages.empty());
  EXPECT_EQ(p.messages[0].role, Role::System);
  EXPECT_TRUE(p.messages[0].text.starts_with("A news article can be classified")) << p.messages[0].text;
}

TEST(Benchmarks, UnknownIdThrows) {
  EXPECT_THROW(find_benchmark("nope"), Error);
}

TEST(Templates, AllParseAndDeclarePlaceholders) {
  for (auto id : kAllTemplates) {
    const auto& t = meta_template(id);
    EXPECT_FALSE(t.messages.empty()) << template_name(id);
    EXPECT_FALSE(t.required.empty()) << template_name(id);
    EXPECT_EQ(template_digest(id).size(), 64u);
  }
  EXPECT_EQ(meta_template(TemplateId::ComplianceJudge).required, (std::set<std::string>{"result", "system"}));
  EXPECT_EQ(meta_template(TemplateId::ValidityJudge).required, (std::set<std::string>{"input_spec", "test"}));
  EXPECT_EQ(meta_template(TemplateId::GenerateTests).required,
            (std::set<std::string>{"context", "input_spec", "num", "num_rules", "num_tests", "rule"}));
}

TEST(Templates, ComplianceJudgeHasNoInputSlot) {
  const auto& t = meta_template(TemplateId::ComplianceJudge);
  EXPECT_FALSE(t.required.contains("test"));
  EXPECT_FALSE(t.required.contains("input"));
}
