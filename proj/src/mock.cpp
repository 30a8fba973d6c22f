#include "promptunit/mock.hpp"

#include <json.hpp>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"

namespace promptunit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad_line(int line, const std::string& what) {
  throw Error(ErrorCode::MalformedScript, "line " + std::to_string(line) + ": " + what);
}

std::string parse_json_string(std::string_view s, int line) {
  try {
    auto j = nlohmann::json::parse(s);
    if (!j.is_string()) bad_line(line, "expected a quoted string");
    return j.get<std::string>();
  } catch (const nlohmann::json::exception&) {
    bad_line(line, "bad quoted string " + std::string(s));
  }
}

MockReply parse_reply(std::string_view s, const std::filesystem::path& base_dir, int line) {
  s = trim(s);
  MockReply reply;
  if (s.starts_with('"')) {
    reply.text = parse_json_string(s, line);
  } else if (s.starts_with("file:")) {
    auto rel = trim(s.substr(5));
    if (rel.empty()) bad_line(line, "file: needs a path");
    try {
      reply.text = read_file(base_dir / std::filesystem::path(std::string(rel)));
    } catch (const Error& e) {
      bad_line(line, e.what());
    }
  } else if (s == "echo") {
    reply.kind = MockReply::Kind::Echo;
  } else if (s == "timeout") {
    reply.kind = MockReply::Kind::Timeout;
  } else if (s.starts_with("error ") || s == "error") {
    reply.kind = MockReply::Kind::Error;
    auto rest = trim(s.substr(5));
    std::size_t n = 0;
    while (n < rest.size() && std::isdigit(static_cast<unsigned char>(rest[n]))) ++n;
    if (n == 0) bad_line(line, "error needs an HTTP status");
    reply.status = std::stoi(std::string(rest.substr(0, n)));
    auto body = trim(rest.substr(n));
    if (!body.empty()) reply.text = body.starts_with('"') ? parse_json_string(body, line) : std::string(body);
  } else {
    reply.text = std::string(s);
  }
  return reply;
}

}  // namespace

std::vector<MockRule> parse_mock_script(std::string_view text, const std::filesystem::path& base_dir) {
  std::vector<MockRule> rules;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    auto line = trim(raw);
    if (line.empty() || line.starts_with('#')) continue;

    MockRule rule;
    rule.line = line_no;
    if (line.starts_with("always ") || line.starts_with("always\t")) {
      rule.persistent = true;
      line = trim(line.substr(6));
    }
    std::size_t arrow = line.find(" => ");
    std::size_t arrow_len = 4;
    if (auto alt = line.find(" ⇒ "); alt != std::string_view::npos && alt < arrow) {
      arrow = alt;
      arrow_len = 2 + std::string_view("⇒").size();
    }
    if (arrow == std::string_view::npos) bad_line(line_no, "expected `<regex> => <reply>`");
    rule.pattern = std::string(trim(line.substr(0, arrow)));
    if (rule.pattern.empty()) bad_line(line_no, "empty regex");
    try {
      rule.regex = boost::regex(rule.pattern, boost::regex::perl);
    } catch (const boost::regex_error& e) {
      bad_line(line_no, std::string("bad regex: ") + e.what());
    }
    rule.reply = parse_reply(line.substr(arrow + arrow_len), base_dir, line_no);
    rules.push_back(std::move(rule));
  }
  if (rules.empty()) throw Error(ErrorCode::MalformedScript, "script has no rules");
  return rules;
}

std::shared_ptr<MockTransport> MockTransport::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedScript, e.what());
  }
  return std::make_shared<MockTransport>(parse_mock_script(text, path.parent_path()));
}

ChatResponse MockTransport::send(const ModelSpec&, std::span<const Message> messages,
                                 std::chrono::milliseconds) {
  std::string joined;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    if (i) joined.push_back('\n');
    joined += messages[i].text;
  }

  MockReply reply;
  {
    std::lock_guard lock(mu_);
    std::size_t hit = rules_.size();
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (used_[i]) continue;
      if (boost::regex_search(joined, rules_[i].regex)) {
        hit = i;
        break;
      }
    }
    if (hit == rules_.size()) {
      throw Error(ErrorCode::MockScriptExhausted, "no live rule matches the request");
    }
    if (!rules_[hit].persistent) used_[hit] = true;
    ++served_;
    reply = rules_[hit].reply;
  }

  switch (reply.kind) {
    case MockReply::Kind::Timeout:
      throw ProviderError(ErrorCode::Timeout, 0, "scripted timeout");
    case MockReply::Kind::Error:
      throw ProviderError(reply.status == 429 ? ErrorCode::RateLimited : ErrorCode::ProviderError,
                          reply.status, reply.text);
    case MockReply::Kind::Echo:
      for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::User) {
          reply.text = it->text;
          break;
        }
      }
      break;
    case MockReply::Kind::Text:
      break;
  }
  return ChatResponse{std::move(reply.text), "stop", Usage{}, std::chrono::milliseconds{0}};
}

std::size_t MockTransport::requests_served() const {
  std::lock_guard lock(mu_);
  return served_;
}

ModelSpec mock_from_script(const std::filesystem::path& path, std::string id) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedScript, e.what());
  }
  // Replies loaded from files count toward the identity, so editing one
  // also changes the cache key.
  std::string identity = text;
  for (const auto& rule : parse_mock_script(text, path.parent_path())) identity += '\0' + rule.reply.text;

  ModelSpec spec;
  spec.provider = Provider::Mock;
  spec.script = path;
  spec.model_name = "mock/" + path.stem().string() + "@" + sha256_hex(identity).substr(0, 12);
  spec.id = id.empty() ? path.stem().string() : std::move(id);
  return spec;
}

}  // namespace promptunit
