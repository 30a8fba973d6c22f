#pragma once

// Prompt files: optional `---` front matter, then `system:` / `user:` /
// `assistant:` sections. A section header is a line holding only the role
// name and a colon at column 0; any other line is body text. Placeholders are
// `{{identifier}}` (whitespace inside the braces allowed), identifiers match
// [A-Za-z_][A-Za-z0-9_]*. See docs/prompt-format.md.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptunit {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role) noexcept;
std::optional<Role> role_from_string(std::string_view name) noexcept;

struct Message {
  Role role = Role::User;
  std::string text;

  friend bool operator==(const Message&, const Message&) = default;
};

using Bindings = std::map<std::string, std::string, std::less<>>;
using FrontMatter = std::vector<std::pair<std::string, std::string>>;

struct PlaceholderRef {
  std::size_t offset = 0;  ///< position of the opening `{{`
  std::size_t length = 0;  ///< through the closing `}}`
  std::string name;
};

/// All placeholders in `text`, in order. Throws MalformedPlaceholder when a
/// `{{` does not open a well-formed placeholder.
std::vector<PlaceholderRef> scan_placeholders(std::string_view text);

/// The prompt artifact under test. Immutable once parsed; every instance
/// satisfies the single-input rule.
struct PromptUnderTest {
  std::string id;
  std::string name;
  std::string source;
  FrontMatter metadata;  ///< front matter keys other than id/name/source, in file order
  std::vector<Message> messages;
  std::set<std::string> placeholders;

  /// Name of the one placeholder that receives the test input.
  [[nodiscard]] const std::string& input_placeholder() const { return *placeholders.begin(); }

  friend bool operator==(const PromptUnderTest&, const PromptUnderTest&) = default;
};

struct MetaPromptTemplate {
  std::string id;
  std::vector<Message> messages;
  std::set<std::string> required;
};

PromptUnderTest parse_prompt_file(std::string_view text);
PromptUnderTest load_prompt_file(const std::filesystem::path& path);

/// Builds a prompt from messages, enforcing the same invariants as parsing.
PromptUnderTest make_prompt(std::string id, std::string name, std::string source,
                            std::vector<Message> messages);

MetaPromptTemplate parse_meta_template(std::string_view text);

/// Canonical file form; parse_prompt_file(serialize_prompt(p)) == p.
std::string serialize_prompt(const PromptUnderTest& put);

/// The messages as they appear in the file body, without front matter. This
/// is the "prompt text" handed to extraction, generation and judge templates.
std::string prompt_text(std::span<const Message> messages);
inline std::string prompt_text(const PromptUnderTest& put) { return prompt_text(put.messages); }

/// Single-pass substitution: values are inserted byte-for-byte and never
/// re-scanned. Throws UnboundPlaceholder for the first placeholder without a
/// binding; extra bindings are ignored.
std::vector<Message> render(std::span<const Message> messages, const Bindings& bindings);
std::vector<Message> render(const PromptUnderTest& put, const Bindings& bindings);
std::vector<Message> render(const MetaPromptTemplate& tmpl, const Bindings& bindings);

/// Binds `input` to the prompt's single placeholder.
std::vector<Message> render_with_input(const PromptUnderTest& put, std::string_view input);

}  // namespace promptunit
