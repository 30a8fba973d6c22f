#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "promptunit/metrics.hpp"

namespace promptunit {

enum class ReportFormat { Markdown, Json, Csv };
enum class ReportSection {
  NoncomplianceTable,
  RuleKindTable,
  ValidityChartData,
  GroundednessTable,
  SpecAgreement,
  PerTestDrilldown,
};

std::string_view to_string(ReportFormat f) noexcept;
std::string_view to_string(ReportSection s) noexcept;
ReportFormat report_format_from_string(std::string_view s);    // ConfigInvalid
ReportSection report_section_from_string(std::string_view s);  // ConfigInvalid

struct ReportSpec {
  std::string run_id;
  std::set<ReportFormat> formats;
  std::set<ReportSection> sections;

  /// Throws ConfigInvalid unless there is at least one format and one section.
  void validate() const;
  static ReportSpec all(std::string run_id);
};

/// One judged cell, flattened for the drilldown section.
struct DrilldownRow {
  std::string prompt_id;
  std::string test_uid;
  std::string model_id;
  int repeat = 1;
  std::string generator;
  std::string rule;  ///< "<id> (<kind>): text", empty for baseline tests
  std::string test_input;
  std::string output;  ///< output text, or the cell error
  std::string verdict;  ///< OK / ERR / "unevaluated"
  std::string explanation;
  std::string validity;
};

std::vector<DrilldownRow> drilldown_rows(std::string_view prompt_id, std::span<const TestCase> tests,
                                         const RuleSet* rules, std::span<const EvalRecord> records);

struct ReportData {
  std::vector<RunMetrics> metrics;  ///< one per prompt, in row order
  std::vector<DrilldownRow> drilldown;
};

/// File name (relative to the report directory) -> contents.
using ReportFiles = std::map<std::string, std::string>;

/// Pure and deterministic. Throws MissingSectionData when a requested
/// section has nothing to show.
ReportFiles render_report(const ReportSpec& spec, const ReportData& data);

void write_report(const std::filesystem::path& dir, const ReportFiles& files);

}  // namespace promptunit
