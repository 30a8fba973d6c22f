#pragma once

#include <string>
#include <string_view>

namespace promptunit {

enum class Decision { Ok, Err };

std::string_view to_string(Decision d) noexcept;

struct VerdictCore {
  Decision decision = Decision::Ok;
  std::string explanation;

  friend bool operator==(const VerdictCore&, const VerdictCore&) = default;
};

/// Judge replies end with a line holding exactly `OK` or `ERR`. Non-empty
/// lines are scanned from the end; the first whose trimmed content is a
/// decision token (case-sensitive) decides. The explanation is every other
/// line, in order, with outer whitespace trimmed. Throws UnparseableVerdict
/// when no line is a decision token.
VerdictCore parse_verdict(std::string_view raw);

}  // namespace promptunit
