#pragma once

#include <span>
#include <string_view>

#include "promptunit/prompt.hpp"

namespace promptunit {

namespace resources {

struct Resource {
  std::string_view id;
  std::string_view text;
};

/// Raw `benchmarks/<id>.prompt` files compiled into the library, sorted by id.
std::span<const Resource> benchmark_files() noexcept;
/// Raw `templates/<id>.prompt` files compiled into the library, sorted by id.
std::span<const Resource> template_files() noexcept;

}  // namespace resources

/// The eight bundled benchmark prompts in their canonical order.
std::vector<PromptUnderTest> list_benchmarks();

/// Throws MalformedArtifact when no fixture has this id.
PromptUnderTest find_benchmark(std::string_view id);

/// Pipeline meta-prompts.
enum class TemplateId {
  ComplianceJudge,
  InputSpec,
  InverseRules,
  ExtractRulesAll,
  ExtractRulesAtLeast,
  GenerateTests,
  BaselineTests,
  ValidityJudge,
  Groundedness,
  TaskSpec,
};

inline constexpr TemplateId kAllTemplates[] = {
    TemplateId::ComplianceJudge, TemplateId::InputSpec,     TemplateId::InverseRules,
    TemplateId::ExtractRulesAll, TemplateId::ExtractRulesAtLeast, TemplateId::GenerateTests,
    TemplateId::BaselineTests,   TemplateId::ValidityJudge, TemplateId::Groundedness,
    TemplateId::TaskSpec,
};

std::string_view template_name(TemplateId id) noexcept;

/// Parsed once, shared for the process lifetime.
const MetaPromptTemplate& meta_template(TemplateId id);

/// sha256 of the raw template file, recorded in run manifests.
std::string template_digest(TemplateId id);

}  // namespace promptunit
