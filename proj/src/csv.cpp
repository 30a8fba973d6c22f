#include "promptunit/csv.hpp"

#include <optional>

namespace promptunit {

namespace {

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_blank(s.back())) s.remove_suffix(1);
  return s;
}

class Reader {
public:
  Reader(std::string_view text, int first_line) : text_(text), line_(first_line) {}

  bool done() const { return pos_ >= text_.size(); }
  int line() const { return line_; }

  /// Reads one record. Returns nullopt and fills `error` when malformed; in
  /// that case the reader has advanced past the bad record.
  std::optional<std::vector<std::string>> next(std::string& error) {
    std::vector<std::string> fields;
    const std::size_t record_start = pos_;
    const int record_line = line_;
    for (;;) {
      while (pos_ < text_.size() && is_blank(text_[pos_])) ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '"') {
        auto field = quoted();
        if (!field) {
          error = "unterminated quoted field";
          resume_after_line(record_start, record_line);
          return std::nullopt;
        }
        fields.push_back(std::move(*field));
        while (pos_ < text_.size() && is_blank(text_[pos_])) ++pos_;
        if (pos_ < text_.size() && text_[pos_] != ',' && text_[pos_] != '\n') {
          error = "unexpected text after closing quote in field " + std::to_string(fields.size());
          skip_rest_of_line();
          return std::nullopt;
        }
      } else {
        const auto end = text_.find_first_of(",\n", pos_);
        const auto stop = end == std::string_view::npos ? text_.size() : end;
        fields.emplace_back(trim(text_.substr(pos_, stop - pos_)));
        pos_ = stop;
      }
      if (pos_ >= text_.size()) return fields;
      if (text_[pos_] == '\n') {
        ++pos_;
        ++line_;
        return fields;
      }
      ++pos_;  // comma
    }
  }

  void skip_blank_lines() {
    for (;;) {
      std::size_t p = pos_;
      while (p < text_.size() && is_blank(text_[p])) ++p;
      if (p < text_.size() && text_[p] == '\n') {
        pos_ = p + 1;
        ++line_;
      } else {
        if (p >= text_.size()) pos_ = p;
        return;
      }
    }
  }

private:
  std::optional<std::string> quoted() {
    std::string out;
    std::size_t p = pos_ + 1;
    int lines = 0;
    while (p < text_.size()) {
      const char c = text_[p];
      if (c == '"') {
        if (p + 1 < text_.size() && text_[p + 1] == '"') {
          out.push_back('"');
          p += 2;
          continue;
        }
        pos_ = p + 1;
        line_ += lines;
        return out;
      }
      if (c == '\n') ++lines;
      out.push_back(c);
      ++p;
    }
    return std::nullopt;
  }

  void resume_after_line(std::size_t record_start, int record_line) {
    const auto nl = text_.find('\n', record_start);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    line_ = record_line + 1;
  }

  void skip_rest_of_line() {
    const auto nl = text_.find('\n', pos_);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    ++line_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
};

}  // namespace

std::string_view strip_code_fence(std::string_view text) {
  auto first_nonblank = text.find_first_not_of(" \t\r\n");
  if (first_nonblank == std::string_view::npos) return text;
  if (text.substr(first_nonblank).starts_with("```")) {
    const auto nl = text.find('\n', first_nonblank);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
  }
  auto last = text.find_last_not_of(" \t\r\n");
  if (last == std::string_view::npos) return text;
  auto line_start = text.rfind('\n', last);
  line_start = line_start == std::string_view::npos ? 0 : line_start + 1;
  if (trim(text.substr(line_start, last + 1 - line_start)) == "```") text = text.substr(0, line_start);
  return text;
}

CsvParseResult parse_csv(std::string_view text, std::size_t expected_fields) {
  CsvParseResult result;
  Reader reader(text, 1);
  for (;;) {
    reader.skip_blank_lines();
    if (reader.done()) break;
    const int line = reader.line();
    std::string error;
    auto fields = reader.next(error);
    if (!fields) {
      result.diagnostics.push_back({line, error});
      continue;
    }
    if (fields->size() != expected_fields) {
      result.diagnostics.push_back({line, "expected " + std::to_string(expected_fields) + " fields, found " +
                                              std::to_string(fields->size())});
      continue;
    }
    result.rows.push_back({line, std::move(*fields)});
  }
  return result;
}

std::string csv_quote(std::string_view field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string csv_row(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_quote(fields[i]);
  }
  out += '\n';
  return out;
}

}  // namespace promptunit
