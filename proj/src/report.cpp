#include "promptunit/report.hpp"

#include <cstdio>

#include "promptunit/csv.hpp"
#include "promptunit/error.hpp"
#include "promptunit/io.hpp"

namespace promptunit {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatNames[] = {"markdown", "json", "csv"};
constexpr std::string_view kSectionNames[] = {
    "noncompliance_table", "rulekind_table", "validity_chart_data",
    "groundedness_table",  "spec_agreement", "per_test_drilldown",
};

std::string cell(const std::optional<Rational>& v) { return v ? format_pct(*v) : "-"; }

std::string score_str(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", score);
  return buf;
}

// Markdown table cells cannot hold pipes or raw newlines.
std::string md_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += "<br>";
    else if (c != '\r') out += c;
  }
  return out;
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string out = "|";
  for (const auto& c : cells) out += " " + md_escape(c) + " |";
  return out + "\n";
}

std::string md_rule(std::size_t n_left, std::size_t n_right) {
  std::string out = "|";
  for (std::size_t i = 0; i < n_left; ++i) out += " --- |";
  for (std::size_t i = 0; i < n_right; ++i) out += " ---: |";
  return out + "\n";
}

std::vector<std::string> table_header(const ComparisonTable& t) {
  std::vector<std::string> h;
  for (const auto& m : t.models) {
    h.push_back(m + " " + t.column_labels[0]);
    h.push_back(m + " " + t.column_labels[1]);
  }
  return h;
}

std::vector<std::string> row_cells(const ComparisonTable::Row& row) {
  std::vector<std::string> out{row.label};
  for (const auto& v : row.values) out.push_back(cell(v));
  return out;
}

std::string md_table(const ComparisonTable& t) {
  auto header = table_header(t);
  header.insert(header.begin(), "Prompt");
  std::string out = md_row(header) + md_rule(1, header.size() - 1);
  for (const auto& r : t.rows) out += md_row(row_cells(r));
  auto avg = row_cells(t.average);
  avg[0] = "**" + avg[0] + "**";
  return out + md_row(avg);
}

void csv_table(std::string& out, const ComparisonTable& t, std::string_view slice) {
  auto emit = [&](const ComparisonTable::Row& r) {
    auto cells = row_cells(r);
    cells.insert(cells.begin(), std::string(slice));
    out += csv_row(cells);
  };
  for (const auto& r : t.rows) emit(r);
  emit(t.average);
}

json table_json(const ComparisonTable& t) {
  json rows = json::array();
  auto add = [&](const ComparisonTable::Row& r) {
    json values = json::array();
    for (const auto& v : r.values) values.push_back(v ? json(format_pct(*v)) : json(nullptr));
    rows.push_back({{"prompt", r.label}, {"values", std::move(values)}});
  };
  for (const auto& r : t.rows) add(r);
  add(t.average);
  return {{"columns", table_header(t)}, {"rows", std::move(rows)}};
}

class Renderer {
public:
  Renderer(const ReportSpec& spec, const ReportData& data) : spec_(spec), data_(data) {}

  ReportFiles run() {
    spec_.validate();
    check_data();
    md_ = "# Prompt test report: " + spec_.run_id + "\n";
    report_json_ = {{"run_id", spec_.run_id}, {"sections", json::object()}};
    for (auto s : spec_.sections) {
      switch (s) {
        case ReportSection::NoncomplianceTable: comparison(s, "Non-compliance by test generator", generator_table); break;
        case ReportSection::RuleKindTable: comparison(s, "Non-compliance by rule kind", rule_kind_table); break;
        case ReportSection::ValidityChartData: validity(); break;
        case ReportSection::GroundednessTable: groundedness(); break;
        case ReportSection::SpecAgreement: agreement(); break;
        case ReportSection::PerTestDrilldown: drilldown(); break;
      }
    }
    ReportFiles files;
    if (spec_.formats.contains(ReportFormat::Markdown)) files["report.md"] = md_;
    if (spec_.formats.contains(ReportFormat::Json)) files["report.json"] = report_json_.dump(2) + "\n";
    if (spec_.formats.contains(ReportFormat::Csv)) {
      for (auto& [name, text] : csv_) files[name] = std::move(text);
    }
    return files;
  }

private:
  void missing(ReportSection s, const std::string& why) const {
    throw Error(ErrorCode::MissingSectionData, std::string(to_string(s)) + ": " + why);
  }

  void check_data() const {
    for (auto s : spec_.sections) {
      if (s == ReportSection::PerTestDrilldown) {
        if (data_.drilldown.empty()) missing(s, "no judged cells");
        continue;
      }
      if (data_.metrics.empty()) missing(s, "no metrics");
      for (const auto& m : data_.metrics) {
        if ((s == ReportSection::NoncomplianceTable || s == ReportSection::RuleKindTable) && m.models.empty()) {
          missing(s, m.prompt_id + " has no models");
        }
        if (s == ReportSection::GroundednessTable && !m.groundedness) missing(s, m.prompt_id + " has no groundedness");
        if (s == ReportSection::SpecAgreement && !m.spec_agreement) missing(s, m.prompt_id + " has no spec agreement");
      }
    }
  }

  void comparison(ReportSection s, std::string_view title,
                  ComparisonTable (*build)(std::span<const RunMetrics>, bool)) {
    const auto all = build(data_.metrics, false);
    const auto valid = build(data_.metrics, true);
    md_ += "\n## " + std::string(title) + " (% of evaluated tests)\n\n### All tests\n\n" + md_table(all) +
           "\n### Valid tests only\n\n" + md_table(valid);

    auto header = table_header(all);
    header.insert(header.begin(), {"slice", "prompt"});
    std::string csv = csv_row(header);
    csv_table(csv, all, "all");
    csv_table(csv, valid, "valid_only");
    csv_[std::string(s == ReportSection::NoncomplianceTable ? "noncompliance" : "rulekind") + ".csv"] = csv;

    report_json_["sections"][std::string(to_string(s))] = {{"all", table_json(all)}, {"valid_only", table_json(valid)}};
  }

  void validity() {
    md_ += "\n## Test validity\n\n";
    md_ += md_row({"Prompt", "Generator", "Valid", "Invalid", "Unknown"}) + md_rule(2, 3);
    std::string csv = csv_row(std::vector<std::string>{"prompt", "generator", "valid", "invalid", "unknown"});
    json rows = json::array();
    for (const auto& m : data_.metrics) {
      for (auto [gen, v] : {std::pair{"rule_based", &m.validity_rule_based}, std::pair{"baseline", &m.validity_baseline}}) {
        std::vector<std::string> r{m.prompt_id, gen, std::to_string(v->n_valid), std::to_string(v->n_invalid),
                                   std::to_string(v->n_unknown)};
        md_ += md_row(r);
        csv += csv_row(r);
        rows.push_back({{"prompt", m.prompt_id},
                        {"generator", gen},
                        {"valid", v->n_valid},
                        {"invalid", v->n_invalid},
                        {"unknown", v->n_unknown}});
      }
    }
    md_ += "\n" + md_row({"Prompt", "Non-compliant", "of which valid", "% valid"}) + md_rule(1, 3);
    std::string csv2 = csv_row(std::vector<std::string>{"prompt", "noncompliant", "valid", "valid_pct"});
    json joins = json::array();
    for (const auto& m : data_.metrics) {
      const auto& nv = m.noncompliant_validity;
      std::vector<std::string> r{m.prompt_id, std::to_string(nv.n_noncompliant), std::to_string(nv.n_valid),
                                 cell(nv.pct())};
      md_ += md_row(r);
      csv2 += csv_row(r);
      joins.push_back({{"prompt", m.prompt_id},
                       {"noncompliant", nv.n_noncompliant},
                       {"valid", nv.n_valid},
                       {"valid_pct", nv.pct() ? json(format_pct(*nv.pct())) : json(nullptr)}});
    }
    csv_["validity.csv"] = csv;
    csv_["noncompliant_validity.csv"] = csv2;
    report_json_["sections"]["validity_chart_data"] = {{"validity", std::move(rows)},
                                                       {"noncompliant_validity", std::move(joins)}};
  }

  void groundedness() {
    md_ += "\n## Rule groundedness\n\n";
    md_ += md_row({"Prompt", "Grounded", "Not grounded", "Unknown", "% grounded"}) + md_rule(1, 4);
    std::string csv = csv_row(std::vector<std::string>{"prompt", "grounded", "not_grounded", "unknown", "grounded_pct"});
    json rows = json::array();
    for (const auto& m : data_.metrics) {
      const auto& g = *m.groundedness;
      const auto judged = g.n_grounded + g.n_not_grounded;
      const std::optional<Rational> rate =
          judged ? std::optional<Rational>(Rational(100 * g.n_grounded, judged)) : std::nullopt;
      std::vector<std::string> r{m.prompt_id, std::to_string(g.n_grounded), std::to_string(g.n_not_grounded),
                                 std::to_string(g.n_unknown), cell(rate)};
      md_ += md_row(r);
      csv += csv_row(r);
      rows.push_back({{"prompt", m.prompt_id},
                      {"grounded", g.n_grounded},
                      {"not_grounded", g.n_not_grounded},
                      {"unknown", g.n_unknown},
                      {"grounded_pct", rate ? json(format_pct(*rate)) : json(nullptr)}});
    }
    csv_["groundedness.csv"] = csv;
    report_json_["sections"]["groundedness_table"] = std::move(rows);
  }

  void agreement() {
    md_ += "\n## Spec agreement\n\n";
    md_ += md_row({"Prompt", "Cells", "Dropped", "Cosine"}) + md_rule(1, 3);
    std::string csv = csv_row(std::vector<std::string>{"prompt", "cells", "dropped", "cosine"});
    json rows = json::array();
    for (const auto& m : data_.metrics) {
      const auto& a = *m.spec_agreement;
      std::vector<std::string> r{m.prompt_id, std::to_string(a.vector_put.size()), std::to_string(a.n_dropped),
                                 score_str(a.score)};
      md_ += md_row(r);
      csv += csv_row(r);
      rows.push_back({{"prompt", m.prompt_id},
                      {"cells", a.vector_put.size()},
                      {"dropped", a.n_dropped},
                      {"cosine", score_str(a.score)}});
    }
    csv_["spec_agreement.csv"] = csv;
    report_json_["sections"]["spec_agreement"] = std::move(rows);
  }

  void drilldown() {
    const std::vector<std::string> cols{"prompt", "test", "model", "repeat", "generator", "rule",
                                        "input", "output", "verdict", "explanation", "validity"};
    md_ += "\n## Per-test results\n\n";
    md_ += md_row({"Prompt", "Test", "Model", "Repeat", "Generator", "Rule", "Input", "Output", "Verdict",
                   "Explanation", "Validity"}) +
           md_rule(cols.size(), 0);
    std::string csv = csv_row(cols);
    json rows = json::array();
    for (const auto& d : data_.drilldown) {
      std::vector<std::string> r{d.prompt_id, d.test_uid,   d.model_id, std::to_string(d.repeat),
                                 d.generator, d.rule,       d.test_input, d.output,
                                 d.verdict,   d.explanation, d.validity};
      md_ += md_row(r);
      csv += csv_row(r);
      json row = json::object();
      for (std::size_t i = 0; i < cols.size(); ++i) row[cols[i]] = r[i];
      row["repeat"] = d.repeat;
      rows.push_back(std::move(row));
    }
    csv_["drilldown.csv"] = csv;
    report_json_["sections"]["per_test_drilldown"] = std::move(rows);
  }

  const ReportSpec& spec_;
  const ReportData& data_;
  std::string md_;
  json report_json_;
  std::map<std::string, std::string> csv_;
};

}  // namespace

std::string_view to_string(ReportFormat f) noexcept { return kFormatNames[static_cast<int>(f)]; }
std::string_view to_string(ReportSection s) noexcept { return kSectionNames[static_cast<int>(s)]; }

ReportFormat report_format_from_string(std::string_view s) {
  for (int i = 0; i < 3; ++i) {
    if (kFormatNames[i] == s) return static_cast<ReportFormat>(i);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown report format `" + std::string(s) + "`");
}

ReportSection report_section_from_string(std::string_view s) {
  for (int i = 0; i < 6; ++i) {
    if (kSectionNames[i] == s) return static_cast<ReportSection>(i);
  }
  throw Error(ErrorCode::ConfigInvalid, "unknown report section `" + std::string(s) + "`");
}

void ReportSpec::validate() const {
  if (formats.empty()) throw Error(ErrorCode::ConfigInvalid, "report needs at least one format");
  if (sections.empty()) throw Error(ErrorCode::ConfigInvalid, "report needs at least one section");
}

ReportSpec ReportSpec::all(std::string run_id) {
  ReportSpec s{std::move(run_id), {}, {}};
  for (int i = 0; i < 3; ++i) s.formats.insert(static_cast<ReportFormat>(i));
  for (int i = 0; i < 6; ++i) s.sections.insert(static_cast<ReportSection>(i));
  return s;
}

std::vector<DrilldownRow> drilldown_rows(std::string_view prompt_id, std::span<const TestCase> tests,
                                         const RuleSet* rules, std::span<const EvalRecord> records) {
  std::map<std::string, const TestCase*, std::less<>> by_uid;
  for (const auto& t : tests) by_uid.emplace(t.test_uid, &t);

  std::vector<DrilldownRow> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    DrilldownRow d;
    d.prompt_id = prompt_id;
    d.test_uid = r.run.test_uid;
    d.model_id = r.run.model_id;
    d.repeat = r.run.repeat;
    d.generator = to_string(r.test.generator);
    if (auto it = by_uid.find(r.run.test_uid); it != by_uid.end()) {
      d.test_input = it->second->test_input;
      d.validity = to_string(it->second->validity);
    }
    if (r.test.rule_id) {
      d.rule = std::to_string(*r.test.rule_id);
      if (r.test.rule_kind) d.rule += " (" + std::string(to_string(*r.test.rule_kind)) + ")";
      if (rules != nullptr) {
        if (const auto* rule = rules->find(*r.test.rule_id)) d.rule += ": " + rule->text;
      }
    }
    if (r.run.output_text) d.output = *r.run.output_text;
    else if (r.run.error) d.output = "[" + std::string(to_string(r.run.error->code)) + "] " + r.run.error->message;
    if (r.compliance) {
      d.verdict = to_string(r.compliance->decision);
      d.explanation = r.compliance->explanation;
    } else {
      d.verdict = "unevaluated";
      d.explanation = r.judge_error.value_or("");
    }
    out.push_back(std::move(d));
  }
  return out;
}

ReportFiles render_report(const ReportSpec& spec, const ReportData& data) { return Renderer(spec, data).run(); }

void write_report(const std::filesystem::path& dir, const ReportFiles& files) {
  for (const auto& [name, text] : files) write_file_atomic(dir / name, text);
}

}  // namespace promptunit
