#include "promptunit/metrics.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "promptunit/error.hpp"

namespace promptunit {

using nlohmann::json;

namespace {

bool is_valid(const EvalRecord& r) { return r.validity && r.validity->decision == Decision::Ok; }

json rational_json(const std::optional<Rational>& r) {
  if (!r) return nullptr;
  return {{"num", r->numerator()}, {"den", r->denominator()}, {"display", format_pct(*r)}};
}

std::optional<Rational> rational_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return Rational(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}

json validity_json(const ValidityStats& v) {
  return {{"n_valid", v.n_valid}, {"n_invalid", v.n_invalid}, {"n_unknown", v.n_unknown}};
}

ValidityStats validity_from_json(const json& j) {
  return {j.at("n_valid").get<std::int64_t>(), j.at("n_invalid").get<std::int64_t>(),
          j.at("n_unknown").get<std::int64_t>()};
}

std::optional<Rational> mean(const std::vector<Rational>& xs) {
  if (xs.empty()) return std::nullopt;
  Rational sum = 0;
  for (const auto& x : xs) sum += x;
  return sum / static_cast<std::int64_t>(xs.size());
}

template <class ValueOf>
ComparisonTable build_table(std::span<const RunMetrics> runs, std::array<std::string, 2> labels, ValueOf value_of) {
  ComparisonTable t;
  t.column_labels = std::move(labels);
  for (const auto& run : runs) {
    for (const auto& m : run.models) {
      if (std::find(t.models.begin(), t.models.end(), m) == t.models.end()) t.models.push_back(m);
    }
  }
  std::vector<std::vector<Rational>> columns(t.models.size() * 2);
  for (const auto& run : runs) {
    ComparisonTable::Row row{run.prompt_id, {}};
    for (std::size_t m = 0; m < t.models.size(); ++m) {
      for (int side = 0; side < 2; ++side) {
        auto v = value_of(run, t.models[m], side);
        if (v) columns[m * 2 + side].push_back(*v);
        row.values.push_back(v);
      }
    }
    t.rows.push_back(std::move(row));
  }
  t.average.label = "Average";
  for (const auto& col : columns) t.average.values.push_back(mean(col));
  return t;
}

}  // namespace

std::string format_pct(const Rational& pct) {
  // round half up at one decimal, in exact arithmetic
  const Rational scaled = pct * 10;
  const bool negative = scaled < 0;
  const Rational mag = negative ? -scaled : scaled;
  const std::int64_t tenths = (2 * mag.numerator() + mag.denominator()) / (2 * mag.denominator());
  std::string out = std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
  return negative && tenths != 0 ? "-" + out : out;
}

bool Slice::matches(const EvalRecord& r) const {
  if (model_id && r.run.model_id != *model_id) return false;
  if (generator && r.test.generator != *generator) return false;
  if (rule_kind && r.test.rule_kind != rule_kind) return false;
  if (valid_only && !is_valid(r)) return false;
  return true;
}

std::optional<Rational> CellStats::pct() const {
  if (n_evaluated == 0) return std::nullopt;
  return Rational(100 * n_noncompliant, n_evaluated);
}

CellStats cell_stats(std::span<const EvalRecord> records, const Slice& slice) {
  CellStats s;
  s.model_id = slice.model_id.value_or("");
  s.generator = slice.generator;
  s.rule_kind = slice.rule_kind;
  s.valid_only = slice.valid_only;
  for (const auto& r : records) {
    if (!slice.matches(r)) continue;
    if (!r.evaluated()) {
      ++s.n_unevaluated;
      continue;
    }
    ++s.n_evaluated;
    if (r.compliance->decision == Decision::Err) ++s.n_noncompliant;
  }
  return s;
}

Rational noncompliance_pct(std::span<const EvalRecord> records, const Slice& slice) {
  auto pct = cell_stats(records, slice).pct();
  if (!pct) throw Error(ErrorCode::EmptySlice, "no evaluated records in slice");
  return *pct;
}

ValidityStats validity_stats(std::span<const TestCase> tests) {
  ValidityStats s;
  for (const auto& t : tests) {
    switch (t.validity) {
      case Validity::Valid: ++s.n_valid; break;
      case Validity::Invalid: ++s.n_invalid; break;
      case Validity::Unknown: ++s.n_unknown; break;
    }
  }
  return s;
}

std::optional<Rational> NoncompliantValidity::pct() const {
  if (n_noncompliant == 0) return std::nullopt;
  return Rational(100 * n_valid, n_noncompliant);
}

NoncompliantValidity noncompliant_validity(std::span<const EvalRecord> records) {
  NoncompliantValidity out;
  for (const auto& r : records) {
    if (!r.evaluated() || r.compliance->decision != Decision::Err) continue;
    ++out.n_noncompliant;
    if (is_valid(r)) ++out.n_valid;
  }
  return out;
}

GroundednessStats groundedness_stats(const RuleSet& rules) {
  GroundednessStats s;
  for (const auto* r : rules.extracted()) {
    switch (r->grounded) {
      case Groundedness::Grounded: ++s.n_grounded; break;
      case Groundedness::NotGrounded: ++s.n_not_grounded; break;
      case Groundedness::Unknown: ++s.n_unknown; break;
    }
  }
  return s;
}

Rational groundedness_rate(const RuleSet& rules) {
  const auto s = groundedness_stats(rules);
  const auto judged = s.n_grounded + s.n_not_grounded;
  if (judged == 0) throw Error(ErrorCode::NoJudgedRules, "no extracted rule has a groundedness verdict");
  return Rational(100 * s.n_grounded, judged);
}

double cosine_similarity(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  std::int64_t dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int x = a[i] != 0, y = b[i] != 0;
    dot += x * y;
    na += x;
    nb += y;
  }
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  // Binary norms are sqrt of counts; one sqrt of the product keeps perfect
  // squares exact.
  return static_cast<double>(dot) / std::sqrt(static_cast<double>(na * nb));
}

SpecAgreement spec_agreement(std::span<const EvalRecord> put_records, std::span<const EvalRecord> spec_records,
                             const std::set<std::string>& exclude_tests) {
  using Key = std::tuple<std::string, std::string, int>;
  auto key_of = [](const EvalRecord& r) { return Key{r.run.test_uid, r.run.model_id, r.run.repeat}; };

  std::map<Key, const EvalRecord*> spec_by_key;
  for (const auto& r : spec_records) {
    if (!spec_by_key.emplace(key_of(r), &r).second) {
      throw Error(ErrorCode::MisalignedRuns, "duplicate cell " + r.run.test_uid + "/" + r.run.model_id);
    }
  }
  if (spec_by_key.size() != put_records.size()) {
    throw Error(ErrorCode::MisalignedRuns, "runs cover different numbers of cells");
  }

  SpecAgreement out;
  for (const auto& p : put_records) {
    auto it = spec_by_key.find(key_of(p));
    if (it == spec_by_key.end()) {
      throw Error(ErrorCode::MisalignedRuns, "cell " + p.run.test_uid + "/" + p.run.model_id + " missing from spec run");
    }
    const auto& s = *it->second;
    if (!p.evaluated() || !s.evaluated() || exclude_tests.contains(p.run.test_uid)) {
      ++out.n_dropped;
      continue;
    }
    out.vector_put.push_back(p.compliance->decision == Decision::Err);
    out.vector_spec.push_back(s.compliance->decision == Decision::Err);
  }
  if (out.vector_put.empty()) throw Error(ErrorCode::EmptySlice, "no cell evaluated on both sides");
  out.score = cosine_similarity(out.vector_put, out.vector_spec);
  return out;
}

const CellStats* RunMetrics::find(std::string_view model_id, std::optional<Generator> generator,
                                  std::optional<RuleKind> rule_kind, bool valid_only) const {
  for (const auto& c : cells) {
    if (c.model_id == model_id && c.generator == generator && c.rule_kind == rule_kind && c.valid_only == valid_only) {
      return &c;
    }
  }
  return nullptr;
}

RunMetrics compute_metrics(std::string prompt_id, std::span<const ModelSpec> muts,
                           std::span<const EvalRecord> records, std::span<const TestCase> tests,
                           const RuleSet* rules, std::span<const EvalRecord> spec_records) {
  RunMetrics m;
  m.prompt_id = std::move(prompt_id);
  for (const auto& mut : muts) m.models.push_back(mut.id);

  for (const auto& model : m.models) {
    for (bool valid_only : {false, true}) {
      for (auto g : {Generator::RuleBased, Generator::Baseline}) {
        auto c = cell_stats(records, Slice{model, g, std::nullopt, valid_only});
        c.prompt_id = m.prompt_id;
        m.cells.push_back(std::move(c));
      }
      for (auto k : {RuleKind::Extracted, RuleKind::Inverse}) {
        auto c = cell_stats(records, Slice{model, Generator::RuleBased, k, valid_only});
        c.prompt_id = m.prompt_id;
        m.cells.push_back(std::move(c));
      }
    }
  }

  std::vector<TestCase> rule_based, baseline;
  for (const auto& t : tests) (t.generator == Generator::RuleBased ? rule_based : baseline).push_back(t);
  m.validity_rule_based = validity_stats(rule_based);
  m.validity_baseline = validity_stats(baseline);
  m.noncompliant_validity = noncompliant_validity(records);
  if (rules != nullptr) m.groundedness = groundedness_stats(*rules);

  if (!spec_records.empty()) {
    std::vector<EvalRecord> put_baseline;
    for (const auto& r : records) {
      if (r.test.generator == Generator::Baseline) put_baseline.push_back(r);
    }
    std::set<std::string> invalid;
    for (const auto& t : baseline) {
      if (t.validity == Validity::Invalid) invalid.insert(t.test_uid);
    }
    m.spec_agreement = spec_agreement(put_baseline, spec_records, invalid);
    m.spec_agreement->prompt_id = m.prompt_id;
  }
  return m;
}

json to_json(const RunMetrics& m) {
  json cells = json::array();
  for (const auto& c : m.cells) {
    cells.push_back({
        {"model_id", c.model_id},
        {"generator", c.generator ? json(to_string(*c.generator)) : json(nullptr)},
        {"rule_kind", c.rule_kind ? json(to_string(*c.rule_kind)) : json(nullptr)},
        {"valid_only", c.valid_only},
        {"n_evaluated", c.n_evaluated},
        {"n_noncompliant", c.n_noncompliant},
        {"n_unevaluated", c.n_unevaluated},
        {"noncompliance_pct", rational_json(c.pct())},
    });
  }
  json j = {
      {"prompt_id", m.prompt_id},
      {"models", m.models},
      {"cells", std::move(cells)},
      {"validity", {{"rule_based", validity_json(m.validity_rule_based)}, {"baseline", validity_json(m.validity_baseline)}}},
      {"noncompliant_validity",
       {{"n_noncompliant", m.noncompliant_validity.n_noncompliant},
        {"n_valid", m.noncompliant_validity.n_valid},
        {"valid_pct", rational_json(m.noncompliant_validity.pct())}}},
      {"groundedness", nullptr},
      {"spec_agreement", nullptr},
  };
  if (m.groundedness) {
    const auto& g = *m.groundedness;
    const auto judged = g.n_grounded + g.n_not_grounded;
    j["groundedness"] = {
        {"n_grounded", g.n_grounded},
        {"n_not_grounded", g.n_not_grounded},
        {"n_unknown", g.n_unknown},
        {"rate_pct", rational_json(judged ? std::optional<Rational>(Rational(100 * g.n_grounded, judged)) : std::nullopt)},
    };
  }
  if (m.spec_agreement) {
    const auto& s = *m.spec_agreement;
    j["spec_agreement"] = {
        {"score", s.score},
        {"n_cells", s.vector_put.size()},
        {"n_dropped", s.n_dropped},
        {"vector_put", s.vector_put},
        {"vector_spec", s.vector_spec},
    };
  }
  return j;
}

RunMetrics metrics_from_json(const json& j) {
  try {
    RunMetrics m;
    m.prompt_id = j.at("prompt_id").get<std::string>();
    m.models = j.at("models").get<std::vector<std::string>>();
    for (const auto& c : j.at("cells")) {
      CellStats s;
      s.prompt_id = m.prompt_id;
      s.model_id = c.at("model_id").get<std::string>();
      if (!c.at("generator").is_null()) {
        s.generator = c["generator"].get<std::string>() == "baseline" ? Generator::Baseline : Generator::RuleBased;
      }
      if (!c.at("rule_kind").is_null()) {
        s.rule_kind = c["rule_kind"].get<std::string>() == "inverse" ? RuleKind::Inverse : RuleKind::Extracted;
      }
      s.valid_only = c.at("valid_only").get<bool>();
      s.n_evaluated = c.at("n_evaluated").get<std::int64_t>();
      s.n_noncompliant = c.at("n_noncompliant").get<std::int64_t>();
      s.n_unevaluated = c.at("n_unevaluated").get<std::int64_t>();
      m.cells.push_back(std::move(s));
    }
    m.validity_rule_based = validity_from_json(j.at("validity").at("rule_based"));
    m.validity_baseline = validity_from_json(j.at("validity").at("baseline"));
    m.noncompliant_validity.n_noncompliant = j.at("noncompliant_validity").at("n_noncompliant").get<std::int64_t>();
    m.noncompliant_validity.n_valid = j.at("noncompliant_validity").at("n_valid").get<std::int64_t>();
    if (!j.at("groundedness").is_null()) {
      const auto& g = j["groundedness"];
      m.groundedness = GroundednessStats{g.at("n_grounded").get<std::int64_t>(), g.at("n_not_grounded").get<std::int64_t>(),
                                         g.at("n_unknown").get<std::int64_t>()};
    }
    if (!j.at("spec_agreement").is_null()) {
      const auto& s = j["spec_agreement"];
      SpecAgreement a;
      a.prompt_id = m.prompt_id;
      a.score = s.at("score").get<double>();
      a.n_dropped = s.at("n_dropped").get<std::int64_t>();
      a.vector_put = s.at("vector_put").get<std::vector<std::uint8_t>>();
      a.vector_spec = s.at("vector_spec").get<std::vector<std::uint8_t>>();
      m.spec_agreement = std::move(a);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedArtifact, std::string("metrics: ") + e.what());
  }
}

ComparisonTable generator_table(std::span<const RunMetrics> runs, bool valid_only) {
  return build_table(runs, {"method", "baseline"},
                     [&](const RunMetrics& run, const std::string& model, int side) -> std::optional<Rational> {
                       const auto* c = run.find(model, side == 0 ? Generator::RuleBased : Generator::Baseline,
                                                std::nullopt, valid_only);
                       return c ? c->pct() : std::nullopt;
                     });
}

ComparisonTable rule_kind_table(std::span<const RunMetrics> runs, bool valid_only) {
  return build_table(runs, {"RL", "Inv"},
                     [&](const RunMetrics& run, const std::string& model, int side) -> std::optional<Rational> {
                       const auto* c = run.find(model, Generator::RuleBased,
                                                side == 0 ? RuleKind::Extracted : RuleKind::Inverse, valid_only);
                       return c ? c->pct() : std::nullopt;
                     });
}

}  // namespace promptunit
