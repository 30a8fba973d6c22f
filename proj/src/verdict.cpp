#include "promptunit/verdict.hpp"

#include <vector>

#include "promptunit/error.hpp"

namespace promptunit {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

}  // namespace

std::string_view to_string(Decision d) noexcept { return d == Decision::Ok ? "OK" : "ERR"; }

VerdictCore parse_verdict(std::string_view raw) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos <= raw.size();) {
    auto nl = raw.find('\n', pos);
    if (nl == std::string_view::npos) nl = raw.size();
    lines.push_back(raw.substr(pos, nl - pos));
    pos = nl + 1;
  }

  for (std::size_t i = lines.size(); i-- > 0;) {
    const auto t = trim(lines[i]);
    if (t != "OK" && t != "ERR") continue;

    VerdictCore v;
    v.decision = t == "OK" ? Decision::Ok : Decision::Err;
    std::string rest;
    for (std::size_t j = 0; j < lines.size(); ++j) {
      if (j == i) continue;
      if (!rest.empty() || j > 0) rest += '\n';
      rest += lines[j];
    }
    v.explanation = std::string(trim(rest));
    return v;
  }
  throw Error(ErrorCode::UnparseableVerdict, "no `OK` or `ERR` line in judge reply");
}

}  // namespace promptunit
