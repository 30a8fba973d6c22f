#pragma once

// Tolerant CSV reader for model-written tables. Fields are separated by
// commas; a field may be double-quoted (with "" as an escaped quote, and
// commas or newlines inside); whitespace around fields is ignored, and
// unquoted fields are trimmed. A malformed record is reported and skipped;
// it never aborts the parse.

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptunit {

struct CsvDiagnostic {
  int line = 0;  ///< 1-based line where the offending record starts
  std::string message;

  friend bool operator==(const CsvDiagnostic&, const CsvDiagnostic&) = default;
};

struct CsvRow {
  int line = 0;
  std::vector<std::string> fields;
};

struct CsvParseResult {
  std::vector<CsvRow> rows;
  std::vector<CsvDiagnostic> diagnostics;
};

/// Drops a leading ``` line (with optional language tag) and a trailing ```
/// line, if present.
std::string_view strip_code_fence(std::string_view text);

/// Parses records; rows with a field count other than `expected_fields` are
/// diagnosed and skipped. Line numbers refer to `text` as given.
CsvParseResult parse_csv(std::string_view text, std::size_t expected_fields);

/// Quotes every field, doubling embedded quotes.
std::string csv_row(std::span<const std::string> fields);
std::string csv_quote(std::string_view field);

}  // namespace promptunit
