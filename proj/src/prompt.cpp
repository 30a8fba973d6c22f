#include "promptunit/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"

namespace promptunit {

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string_view rtrim(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::string_view trim(std::string_view s) {
  s = rtrim(s);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(pos));
      break;
    }
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return lines;
}

std::optional<Role> header_role(std::string_view line) {
  line = rtrim(line);
  if (line.size() < 2 || line.back() != ':') return std::nullopt;
  return role_from_string(line.substr(0, line.size() - 1));
}

std::string join_lines(std::span<const std::string_view> lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out.append(lines[i]);
  }
  return out;
}

struct ParsedFile {
  FrontMatter front;
  std::vector<Message> messages;
};

ParsedFile parse_sections(std::string_view raw) {
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r' && i + 1 < raw.size() && raw[i + 1] == '\n') continue;
    text.push_back(raw[i]);
  }
  const auto lines = split_lines(text);

  ParsedFile out;
  std::size_t i = 0;
  if (!lines.empty() && rtrim(lines[0]) == "---") {
    bool closed = false;
    for (i = 1; i < lines.size(); ++i) {
      auto line = rtrim(lines[i]);
      if (line == "---") {
        closed = true;
        ++i;
        break;
      }
      if (trim(line).empty()) continue;
      auto colon = line.find(':');
      if (colon == std::string_view::npos || colon == 0) {
        throw Error(ErrorCode::MalformedFrontMatter,
                    "line " + std::to_string(i + 1) + ": expected `key: value`");
      }
      auto key = trim(line.substr(0, colon));
      for (char c : key) {
        if (!is_ident_char(c) && c != '-') {
          throw Error(ErrorCode::MalformedFrontMatter,
                      "line " + std::to_string(i + 1) + ": bad key `" + std::string(key) + "`");
        }
      }
      out.front.emplace_back(std::string(key), std::string(trim(line.substr(colon + 1))));
    }
    if (!closed) throw Error(ErrorCode::MalformedFrontMatter, "front matter is not closed by `---`");
  }

  std::optional<Role> current;
  std::size_t body_start = 0;
  auto flush = [&](std::size_t end) {
    if (!current) return;
    out.messages.push_back(
        {*current, join_lines(std::span(lines).subspan(body_start, end - body_start))});
  };
  for (; i < lines.size(); ++i) {
    if (auto role = header_role(lines[i])) {
      flush(i);
      current = role;
      body_start = i + 1;
      continue;
    }
    if (!current && !trim(lines[i]).empty()) {
      throw Error(ErrorCode::MalformedRoleHeader,
                  "line " + std::to_string(i + 1) + ": text before the first role header");
    }
  }
  flush(lines.size());
  if (out.messages.empty()) {
    throw Error(ErrorCode::MalformedRoleHeader, "no `system:`, `user:` or `assistant:` section");
  }
  return out;
}

std::string slugify(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out;
}

std::set<std::string> check_single_input(std::span<const Message> messages) {
  std::set<std::string> in_user;
  std::set<std::string> elsewhere;
  for (const auto& m : messages) {
    for (auto& ref : scan_placeholders(m.text)) {
      (m.role == Role::User ? in_user : elsewhere).insert(std::move(ref.name));
    }
  }
  for (const auto& name : elsewhere) {
    if (!in_user.contains(name)) {
      throw Error(ErrorCode::PlaceholderOutsideUser,
                  "placeholder `" + name + "` appears outside user messages");
    }
  }
  if (in_user.empty()) throw Error(ErrorCode::NoUserPlaceholder, "user messages have no placeholder");
  if (in_user.size() > 1) {
    std::string names;
    for (const auto& n : in_user) names += (names.empty() ? "" : ", ") + n;
    throw Error(ErrorCode::MultipleUserPlaceholders, "found " + names);
  }
  return in_user;
}

}  // namespace

std::string_view to_string(Role role) noexcept {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::optional<Role> role_from_string(std::string_view name) noexcept {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  return std::nullopt;
}

std::vector<PlaceholderRef> scan_placeholders(std::string_view text) {
  std::vector<PlaceholderRef> refs;
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    std::size_t p = pos + 2;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    const std::size_t name_start = p;
    if (p < text.size() && is_ident_start(text[p])) {
      while (p < text.size() && is_ident_char(text[p])) ++p;
    }
    const std::size_t name_end = p;
    while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
    if (name_end == name_start || text.substr(p, 2) != "}}") {
      throw Error(ErrorCode::MalformedPlaceholder,
                  "offset " + std::to_string(pos) + ": `{{` does not open a `{{identifier}}`");
    }
    refs.push_back({pos, p + 2 - pos, std::string(text.substr(name_start, name_end - name_start))});
    pos = p + 2;
  }
  return refs;
}

PromptUnderTest make_prompt(std::string id, std::string name, std::string source,
                            std::vector<Message> messages) {
  PromptUnderTest put;
  put.placeholders = check_single_input(messages);
  put.id = std::move(id);
  put.name = std::move(name);
  put.source = std::move(source);
  put.messages = std::move(messages);
  return put;
}

PromptUnderTest parse_prompt_file(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::MalformedRoleHeader, "empty prompt file");
  auto parsed = parse_sections(text);

  std::string id, name, source;
  FrontMatter rest;
  for (auto& [key, value] : parsed.front) {
    if (key == "id") id = value;
    else if (key == "name") name = value;
    else if (key == "source") source = value;
    else rest.emplace_back(key, value);
  }
  if (id.empty() && !name.empty()) id = slugify(name);
  if (id.empty()) id = "prompt-" + sha256_hex(text).substr(0, 12);

  auto put = make_prompt(std::move(id), std::move(name), std::move(source), std::move(parsed.messages));
  put.metadata = std::move(rest);
  return put;
}

PromptUnderTest load_prompt_file(const std::filesystem::path& path) {
  return parse_prompt_file(read_file(path));
}

MetaPromptTemplate parse_meta_template(std::string_view text) {
  auto parsed = parse_sections(text);
  MetaPromptTemplate tmpl;
  for (auto& [key, value] : parsed.front) {
    if (key == "id") tmpl.id = value;
  }
  for (const auto& m : parsed.messages) {
    for (auto& ref : scan_placeholders(m.text)) tmpl.required.insert(std::move(ref.name));
  }
  tmpl.messages = std::move(parsed.messages);
  return tmpl;
}

std::string prompt_text(std::span<const Message> messages) {
  std::string out;
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ":\n";
    out += m.text;
    out += '\n';
  }
  return out;
}

std::string serialize_prompt(const PromptUnderTest& put) {
  std::string out = "---\nid: " + put.id + "\n";
  if (!put.name.empty()) out += "name: " + put.name + "\n";
  if (!put.source.empty()) out += "source: " + put.source + "\n";
  for (const auto& [key, value] : put.metadata) out += key + ": " + value + "\n";
  out += "---\n";
  out += prompt_text(put);
  return out;
}

std::vector<Message> render(std::span<const Message> messages, const Bindings& bindings) {
  std::vector<Message> out;
  out.reserve(messages.size());
  for (const auto& m : messages) {
    std::string text;
    std::size_t last = 0;
    for (const auto& ref : scan_placeholders(m.text)) {
      auto it = bindings.find(ref.name);
      if (it == bindings.end()) throw Error(ErrorCode::UnboundPlaceholder, ref.name);
      text.append(m.text, last, ref.offset - last);
      text.append(it->second);
      last = ref.offset + ref.length;
    }
    text.append(m.text, last);
    out.push_back({m.role, std::move(text)});
  }
  return out;
}

std::vector<Message> render(const PromptUnderTest& put, const Bindings& bindings) {
  return render(std::span(put.messages), bindings);
}

std::vector<Message> render(const MetaPromptTemplate& tmpl, const Bindings& bindings) {
  return render(std::span(tmpl.messages), bindings);
}

std::vector<Message> render_with_input(const PromptUnderTest& put, std::string_view input) {
  return render(put, Bindings{{put.input_placeholder(), std::string(input)}});
}

}  // namespace promptunit
