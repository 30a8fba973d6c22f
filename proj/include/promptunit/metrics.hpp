#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <boost/rational.hpp>
#include <json.hpp>

#include "promptunit/evaluators.hpp"

namespace promptunit {

/// Exact percentages; rounding happens only in format_pct.
using Rational = boost::rational<std::int64_t>;

/// Percentage with one decimal, rounded half up ("12.5").
std::string format_pct(const Rational& pct);

/// Which eval records a statistic covers. Unset fields match everything.
struct Slice {
  std::optional<std::string> model_id;
  std::optional<Generator> generator;
  std::optional<RuleKind> rule_kind;
  bool valid_only = false;  ///< only tests whose validity verdict is OK

  [[nodiscard]] bool matches(const EvalRecord& r) const;
};

struct CellStats {
  std::string prompt_id;
  std::string model_id;
  std::optional<Generator> generator;
  std::optional<RuleKind> rule_kind;
  bool valid_only = false;
  std::int64_t n_evaluated = 0;
  std::int64_t n_noncompliant = 0;
  std::int64_t n_unevaluated = 0;

  /// 100 * noncompliant / evaluated, absent when nothing was evaluated.
  [[nodiscard]] std::optional<Rational> pct() const;
};

CellStats cell_stats(std::span<const EvalRecord> records, const Slice& slice);

/// 100 * n_err / n_evaluated over the slice; unevaluated cells are left out
/// of the denominator. Throws EmptySlice when nothing in the slice was evaluated.
Rational noncompliance_pct(std::span<const EvalRecord> records, const Slice& slice = {});

struct ValidityStats {
  std::int64_t n_valid = 0;
  std::int64_t n_invalid = 0;
  std::int64_t n_unknown = 0;

  friend bool operator==(const ValidityStats&, const ValidityStats&) = default;
};

ValidityStats validity_stats(std::span<const TestCase> tests);

struct NoncompliantValidity {
  std::int64_t n_noncompliant = 0;
  std::int64_t n_valid = 0;
  [[nodiscard]] std::optional<Rational> pct() const;
};

/// Among non-compliant evaluated records, how many come from valid tests.
NoncompliantValidity noncompliant_validity(std::span<const EvalRecord> records);

struct GroundednessStats {
  std::int64_t n_grounded = 0;
  std::int64_t n_not_grounded = 0;
  std::int64_t n_unknown = 0;
};

GroundednessStats groundedness_stats(const RuleSet& rules);

/// 100 * grounded / (grounded + not_grounded) over extracted rules only.
/// Throws NoJudgedRules.
Rational groundedness_rate(const RuleSet& rules);

/// Cosine of two equal-length binary vectors. Two all-zero vectors score 1;
/// a zero vector against a non-zero one scores 0.
double cosine_similarity(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct SpecAgreement {
  std::string prompt_id;
  std::vector<std::uint8_t> vector_put;   ///< 1 = non-compliant
  std::vector<std::uint8_t> vector_spec;
  double score = 1.0;
  std::int64_t n_dropped = 0;  ///< cells unevaluated on either side or from invalid tests
};

/// Aligns the two runs cell by cell over (test, model, repeat). Both must
/// cover exactly the same cells (MisalignedRuns otherwise). Cells unevaluated
/// on either side, and cells of tests in `exclude_tests`, are dropped
/// pairwise. Throws EmptySlice when no cell survives.
SpecAgreement spec_agreement(std::span<const EvalRecord> put_records, std::span<const EvalRecord> spec_records,
                             const std::set<std::string>& exclude_tests = {});

/// Everything a report needs about one prompt's run, as written to metrics.json.
struct RunMetrics {
  std::string prompt_id;
  std::vector<std::string> models;
  std::vector<CellStats> cells;
  ValidityStats validity_rule_based;
  ValidityStats validity_baseline;
  NoncompliantValidity noncompliant_validity;
  std::optional<GroundednessStats> groundedness;
  std::optional<SpecAgreement> spec_agreement;

  [[nodiscard]] const CellStats* find(std::string_view model_id, std::optional<Generator> generator,
                                      std::optional<RuleKind> rule_kind, bool valid_only) const;
};

/// Cells: per model, one per generator and one per rule kind, each for all
/// tests and for valid tests only.
RunMetrics compute_metrics(std::string prompt_id, std::span<const ModelSpec> muts,
                           std::span<const EvalRecord> records, std::span<const TestCase> tests,
                           const RuleSet* rules, std::span<const EvalRecord> spec_records = {});

nlohmann::json to_json(const RunMetrics& m);
RunMetrics metrics_from_json(const nlohmann::json& j);

/// Prompts as rows, two columns per model, plus a per-column average row
/// over the prompts that have a value.
struct ComparisonTable {
  std::vector<std::string> models;
  std::array<std::string, 2> column_labels;
  struct Row {
    std::string label;
    std::vector<std::optional<Rational>> values;  ///< models.size() * 2
  };
  std::vector<Row> rows;
  Row average;
};

/// Columns per model: rule-based ("method") then baseline.
ComparisonTable generator_table(std::span<const RunMetrics> runs, bool valid_only = false);
/// Columns per model: tests from extracted rules ("RL") then inverse rules ("Inv").
ComparisonTable rule_kind_table(std::span<const RunMetrics> runs, bool valid_only = false);

}  // namespace promptunit
