#include "promptunit/spec_extractor.hpp"

#include <array>
#include <cctype>
#include <set>

#include "promptunit/error.hpp"
#include "promptunit/parallel.hpp"
#include "promptunit/resources.hpp"
#include "promptunit/verdict.hpp"

namespace promptunit {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string_view strip_bullet(std::string_view line) {
  static constexpr std::array<std::string_view, 10> kGlyphs = {
      "-", "*", "+", "•", "◦", "○", "∘", "·", "‣", "▪",
  };
  for (auto g : kGlyphs) {
    if (line.starts_with(g) && line.size() > g.size() &&
        (line[g.size()] == ' ' || line[g.size()] == '\t')) {
      return trim(line.substr(g.size()));
    }
  }
  std::size_t n = 0;
  while (n < line.size() && std::isdigit(static_cast<unsigned char>(line[n]))) ++n;
  if (n > 0 && n + 1 < line.size() && (line[n] == '.' || line[n] == ')') &&
      (line[n + 1] == ' ' || line[n + 1] == '\t')) {
    return trim(line.substr(n + 1));
  }
  return line;
}

std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + items[i];
  }
  return out;
}

std::string joined(const std::vector<const OutputRule*>& rules) {
  std::string out;
  for (const auto* r : rules) {
    if (!out.empty()) out += '\n';
    out += r->text;
  }
  return out;
}

}  // namespace

std::string_view to_string(Provenance p) noexcept { return p == Provenance::Extracted ? "extracted" : "edited"; }
std::string_view to_string(RuleKind k) noexcept { return k == RuleKind::Extracted ? "extracted" : "inverse"; }
std::string_view to_string(Groundedness g) noexcept {
  switch (g) {
    case Groundedness::Unknown: return "unknown";
    case Groundedness::Grounded: return "grounded";
    case Groundedness::NotGrounded: return "not_grounded";
  }
  return "unknown";
}

const OutputRule* RuleSet::find(int rule_id) const noexcept {
  for (const auto& r : rules) {
    if (r.rule_id == rule_id) return &r;
  }
  return nullptr;
}

std::vector<const OutputRule*> RuleSet::extracted() const {
  std::vector<const OutputRule*> out;
  for (const auto& r : rules) {
    if (r.kind == RuleKind::Extracted) out.push_back(&r);
  }
  return out;
}

void RuleSet::validate() const {
  std::set<int> ids;
  for (const auto& r : rules) {
    if (r.rule_id <= 0) throw Error(ErrorCode::MalformedArtifact, "rule ids must be positive");
    if (!ids.insert(r.rule_id).second) {
      throw Error(ErrorCode::MalformedArtifact, "duplicate rule id " + std::to_string(r.rule_id));
    }
    if (r.text.empty() || r.text.find('\n') != std::string::npos) {
      throw Error(ErrorCode::MalformedArtifact, "rule " + std::to_string(r.rule_id) + " must be one non-empty line");
    }
    if ((r.kind == RuleKind::Inverse) != r.inverse_of.has_value()) {
      throw Error(ErrorCode::MalformedArtifact,
                  "rule " + std::to_string(r.rule_id) + ": inverse_of must be set exactly for inverse rules");
    }
  }
  std::set<int> targets;
  for (const auto& r : rules) {
    if (!r.inverse_of) continue;
    const auto* target = find(*r.inverse_of);
    if (target == nullptr || target->kind != RuleKind::Extracted) {
      throw Error(ErrorCode::MalformedArtifact,
                  "rule " + std::to_string(r.rule_id) + " inverts unknown rule " + std::to_string(*r.inverse_of));
    }
    if (!targets.insert(*r.inverse_of).second) {
      throw Error(ErrorCode::MalformedArtifact, "rule " + std::to_string(*r.inverse_of) + " has two inverses");
    }
  }
}

std::vector<std::string> reply_lines(std::string_view reply) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string_view::npos) nl = reply.size();
    auto line = trim(reply.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.starts_with("```")) continue;
    line = strip_bullet(line);
    if (!line.empty()) out.emplace_back(line);
  }
  return out;
}

InputSpec extract_input_spec(const PromptUnderTest& put, const ModelClient& meta) {
  const auto messages = render(meta_template(TemplateId::InputSpec), {{"context", prompt_text(put)}});
  InputSpec is;
  is.statements = reply_lines(meta.ask(messages));
  if (is.statements.empty()) throw Error(ErrorCode::EmptyExtraction, "input specification reply is empty");
  is.source_put = put.id;
  return is;
}

RuleSet extract_output_rules(const PromptUnderTest& put, const ModelClient& meta, std::optional<int> num_rules) {
  Bindings b{{"input_data", prompt_text(put)}};
  auto tmpl = TemplateId::ExtractRulesAll;
  if (num_rules) {
    if (*num_rules <= 0) throw std::invalid_argument("num_rules must be positive");
    tmpl = TemplateId::ExtractRulesAtLeast;
    b["num_rules"] = std::to_string(*num_rules);
  }
  const auto lines = reply_lines(meta.ask(render(meta_template(tmpl), b)));
  if (lines.empty()) throw Error(ErrorCode::EmptyExtraction, "output rules reply is empty");

  RuleSet set;
  set.put_id = put.id;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    OutputRule r;
    r.rule_id = static_cast<int>(i + 1);
    r.text = lines[i];
    set.rules.push_back(std::move(r));
  }
  return set;
}

RuleSet invert_rules(const RuleSet& rules, const ModelClient& meta) {
  const auto extracted = rules.extracted();
  if (extracted.empty()) throw std::invalid_argument("invert_rules: no extracted rules");

  const auto lines =
      reply_lines(meta.ask(render(meta_template(TemplateId::InverseRules), {{"rule", joined(extracted)}})));
  if (lines.size() != extracted.size()) {
    throw Error(ErrorCode::CountMismatch, "expected " + std::to_string(extracted.size()) + " inverse rules, got " +
                                              std::to_string(lines.size()));
  }

  RuleSet out;
  out.put_id = rules.put_id;
  int max_id = 0;
  for (const auto* r : extracted) {
    out.rules.push_back(*r);
    max_id = std::max(max_id, r->rule_id);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    OutputRule inv;
    inv.rule_id = max_id + static_cast<int>(i) + 1;
    inv.text = lines[i];
    inv.kind = RuleKind::Inverse;
    inv.inverse_of = extracted[i]->rule_id;
    out.rules.push_back(std::move(inv));
  }
  return out;
}

RuleSet check_groundedness(const RuleSet& rules, const PromptUnderTest& put, const ModelClient& meta) {
  if (rules.rules.empty()) throw std::invalid_argument("check_groundedness: empty rule set");
  RuleSet out = rules;
  const auto description = prompt_text(put);
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < out.rules.size(); ++i) {
    if (out.rules[i].kind == RuleKind::Extracted) targets.push_back(i);
  }
  parallel_for(targets.size(), meta.parallelism, [&](std::size_t k) {
    auto& rule = out.rules[targets[k]];
    const auto reply =
        meta.ask(render(meta_template(TemplateId::Groundedness), {{"description", description}, {"rule", rule.text}}));
    const auto v = parse_verdict(reply);
    rule.grounded = v.decision == Decision::Ok ? Groundedness::Grounded : Groundedness::NotGrounded;
    rule.groundedness_explanation = reply;
  });
  return out;
}

TaskSpec extract_task_spec(const PromptUnderTest& put, const ModelClient& meta) {
  const auto reply = meta.ask(render(meta_template(TemplateId::TaskSpec), {{"prompt", prompt_text(put)}}));
  auto intent = trim(reply);
  if (intent.empty()) throw Error(ErrorCode::EmptyExtraction, "task specification reply is empty");
  return {std::string(intent), put.id};
}

PromptUnderTest build_spec_prompt(const TaskSpec& task, const RuleSet& rules) {
  std::vector<std::string> texts;
  for (const auto* r : rules.extracted()) texts.push_back(r->text);
  if (texts.empty()) throw std::invalid_argument("build_spec_prompt: no extracted rules");

  std::string system = task.intent_text + "\n\nThe output must satisfy all of the following rules:\n" + numbered(texts);
  return make_prompt(task.source_put + "-spec", "Spec prompt for " + task.source_put,
                     "task specification followed by extracted output rules",
                     {{Role::System, std::move(system)}, {Role::User, "{{input}}"}});
}

std::string serialize_input_spec(const InputSpec& is) {
  std::string out;
  for (const auto& s : is.statements) out += s + "\n";
  return out;
}

InputSpec parse_input_spec(std::string_view text, std::string source_put) {
  InputSpec is;
  is.source_put = std::move(source_put);
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (!line.empty()) is.statements.emplace_back(line);
  }
  return is;
}

json rules_to_json(const RuleSet& rules) {
  json arr = json::array();
  for (const auto& r : rules.rules) {
    json j = {
        {"rule_id", r.rule_id},
        {"text", r.text},
        {"kind", to_string(r.kind)},
        {"inverse_of", r.inverse_of ? json(*r.inverse_of) : json(nullptr)},
        {"grounded", to_string(r.grounded)},
    };
    if (r.groundedness_explanation) j["groundedness_explanation"] = *r.groundedness_explanation;
    arr.push_back(std::move(j));
  }
  return arr;
}

RuleSet rules_from_json(const json& j, std::string put_id) {
  if (!j.is_array()) throw Error(ErrorCode::MalformedArtifact, "rules file must hold a JSON array");
  RuleSet set;
  set.put_id = std::move(put_id);
  try {
    for (const auto& o : j) {
      OutputRule r;
      r.rule_id = o.at("rule_id").get<int>();
      r.text = o.at("text").get<std::string>();
      const auto kind = o.value("kind", "extracted");
      if (kind == "extracted") r.kind = RuleKind::Extracted;
      else if (kind == "inverse") r.kind = RuleKind::Inverse;
      else throw Error(ErrorCode::MalformedArtifact, "unknown rule kind `" + kind + "`");
      if (o.contains("inverse_of") && !o["inverse_of"].is_null()) r.inverse_of = o["inverse_of"].get<int>();
      const auto g = o.value("grounded", "unknown");
      if (g == "unknown") r.grounded = Groundedness::Unknown;
      else if (g == "grounded") r.grounded = Groundedness::Grounded;
      else if (g == "not_grounded") r.grounded = Groundedness::NotGrounded;
      else throw Error(ErrorCode::MalformedArtifact, "unknown grounded value `" + g + "`");
      if (o.contains("groundedness_explanation") && o["groundedness_explanation"].is_string()) {
        r.groundedness_explanation = o["groundedness_explanation"].get<std::string>();
      }
      set.rules.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedArtifact, std::string("rules file: ") + e.what());
  }
  set.validate();
  return set;
}

}  // namespace promptunit
