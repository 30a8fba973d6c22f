#pragma once

// Scripted backend for deterministic runs. A script is a list of rules, one
// per line:
//
//   # comment
//   [always] <regex> => <reply>
//
// A request is matched against the rules in file order (regex search over the
// message contents joined with '\n'); the first live rule that matches
// answers. Rules are one-shot unless prefixed with `always`. `⇒` is accepted
// in place of `=>`. Reply forms:
//
//   "json string"     inline text with JSON escapes
//   file:<path>       file contents, path relative to the script
//   echo              the last user message, verbatim
//   error <status> ["body"]   provider failure with that HTTP status
//   timeout           transport timeout
//   anything else     the trimmed remainder of the line, verbatim
//
// See docs/mock-script.md.

#include <filesystem>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <boost/regex.hpp>

#include "promptunit/gateway.hpp"

namespace promptunit {

struct MockReply {
  enum class Kind { Text, Echo, Error, Timeout };
  Kind kind = Kind::Text;
  std::string text;  ///< reply text, or error body
  int status = 0;    ///< Error only
};

struct MockRule {
  std::string pattern;
  boost::regex regex;
  MockReply reply;
  bool persistent = false;
  int line = 0;
};

std::vector<MockRule> parse_mock_script(std::string_view text,
                                        const std::filesystem::path& base_dir = {});

class MockTransport final : public Transport {
public:
  explicit MockTransport(std::vector<MockRule> rules) : rules_(std::move(rules)), used_(rules_.size()) {}
  static std::shared_ptr<MockTransport> from_file(const std::filesystem::path& path);

  ChatResponse send(const ModelSpec& model, std::span<const Message> messages,
                    std::chrono::milliseconds timeout) override;

  [[nodiscard]] std::size_t requests_served() const;

private:
  mutable std::mutex mu_;
  std::vector<MockRule> rules_;
  std::vector<bool> used_;
  std::size_t served_ = 0;
};

/// Validates the script and returns a mock ModelSpec for it. The model name
/// carries a digest of the script and any reply files, so editing either
/// invalidates cached replies.
ModelSpec mock_from_script(const std::filesystem::path& path, std::string id = {});

}  // namespace promptunit
