#include "promptunit/resources.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"

namespace promptunit {

namespace {

constexpr std::array<std::string_view, 8> kBenchmarkOrder = {
    "speech-tag", "text-to-p", "shakespeare", "sentence",
    "extract-names", "elements", "classify", "art-prompt",
};

std::string_view raw_template(TemplateId id) {
  const auto name = template_name(id);
  for (const auto& r : resources::template_files()) {
    if (r.id == name) return r.text;
  }
  throw Error(ErrorCode::MalformedArtifact, "template `" + std::string(name) + "` not bundled");
}

}  // namespace

std::vector<PromptUnderTest> list_benchmarks() {
  std::vector<PromptUnderTest> out;
  for (auto id : kBenchmarkOrder) out.push_back(find_benchmark(id));
  return out;
}

PromptUnderTest find_benchmark(std::string_view id) {
  for (const auto& r : resources::benchmark_files()) {
    if (r.id == id) return parse_prompt_file(r.text);
  }
  throw Error(ErrorCode::MalformedArtifact, "no bundled benchmark `" + std::string(id) + "`");
}

std::string_view template_name(TemplateId id) noexcept {
  switch (id) {
    case TemplateId::ComplianceJudge: return "compliance_judge";
    case TemplateId::InputSpec: return "input_spec";
    case TemplateId::InverseRules: return "inverse_rules";
    case TemplateId::ExtractRulesAll: return "extract_rules_all";
    case TemplateId::ExtractRulesAtLeast: return "extract_rules_at_least";
    case TemplateId::GenerateTests: return "generate_tests";
    case TemplateId::BaselineTests: return "baseline_tests";
    case TemplateId::ValidityJudge: return "validity_judge";
    case TemplateId::Groundedness: return "groundedness";
    case TemplateId::TaskSpec: return "task_spec";
  }
  return "";
}

const MetaPromptTemplate& meta_template(TemplateId id) {
  static const auto parsed = [] {
    std::array<MetaPromptTemplate, std::size(kAllTemplates)> all;
    for (auto t : kAllTemplates) all[static_cast<std::size_t>(t)] = parse_meta_template(raw_template(t));
    return all;
  }();
  return parsed[static_cast<std::size_t>(id)];
}

std::string template_digest(TemplateId id) { return sha256_hex(raw_template(id)); }

}  // namespace promptunit
