#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptunit/model_client.hpp"
#include "promptunit/prompt.hpp"

namespace promptunit {

enum class Provenance { Extracted, Edited };
enum class RuleKind { Extracted, Inverse };
enum class Groundedness { Unknown, Grounded, NotGrounded };

std::string_view to_string(Provenance p) noexcept;
std::string_view to_string(RuleKind k) noexcept;
std::string_view to_string(Groundedness g) noexcept;

/// Constraints defining the valid input domain. One single-line statement each.
struct InputSpec {
  std::vector<std::string> statements;
  Provenance provenance = Provenance::Extracted;
  std::string source_put;

  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct OutputRule {
  int rule_id = 0;
  std::string text;
  RuleKind kind = RuleKind::Extracted;
  std::optional<int> inverse_of;
  Groundedness grounded = Groundedness::Unknown;
  std::optional<std::string> groundedness_explanation;

  friend bool operator==(const OutputRule&, const OutputRule&) = default;
};

/// Extracted rules first, then inverses.
struct RuleSet {
  std::string put_id;
  std::vector<OutputRule> rules;

  [[nodiscard]] const OutputRule* find(int rule_id) const noexcept;
  [[nodiscard]] std::vector<const OutputRule*> extracted() const;
  [[nodiscard]] std::size_t size() const noexcept { return rules.size(); }

  /// Throws MalformedArtifact when ids repeat, an inverse link dangles or
  /// points at a non-extracted rule, or kind and inverse_of disagree.
  void validate() const;

  friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

struct TaskSpec {
  std::string intent_text;
  std::string source_put;
};

/// Splits a model reply into statements: one per non-empty line, with code
/// fences dropped and leading bullets or list numbering stripped.
std::vector<std::string> reply_lines(std::string_view reply);

InputSpec extract_input_spec(const PromptUnderTest& put, const ModelClient& meta);

/// With `num_rules` set the "at least N most crucial rules" instruction is
/// used, otherwise the "all the rules" one.
RuleSet extract_output_rules(const PromptUnderTest& put, const ModelClient& meta,
                             std::optional<int> num_rules = std::nullopt);

/// One request for all extracted rules; the i-th reply line becomes the
/// inverse of the i-th extracted rule. Existing inverses are replaced.
RuleSet invert_rules(const RuleSet& rules, const ModelClient& meta);

/// Judges each extracted rule against the prompt text, one request per rule.
/// Inverse rules are left unjudged.
RuleSet check_groundedness(const RuleSet& rules, const PromptUnderTest& put, const ModelClient& meta);

TaskSpec extract_task_spec(const PromptUnderTest& put, const ModelClient& meta);

/// Synthesises a prompt from the task description followed by the numbered
/// extracted rules. Deterministic in its inputs.
PromptUnderTest build_spec_prompt(const TaskSpec& task, const RuleSet& rules);

// Artifact files.
std::string serialize_input_spec(const InputSpec& is);
InputSpec parse_input_spec(std::string_view text, std::string source_put = {});

nlohmann::json rules_to_json(const RuleSet& rules);
RuleSet rules_from_json(const nlohmann::json& j, std::string put_id = {});

}  // namespace promptunit
