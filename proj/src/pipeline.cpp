#include "promptunit/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include <unistd.h>

#include "promptunit/error.hpp"
#include "promptunit/evaluators.hpp"
#include "promptunit/io.hpp"
#include "promptunit/resources.hpp"
#include "promptunit/runner.hpp"
#include "promptunit/spec_extractor.hpp"
#include "promptunit/test_generator.hpp"

namespace promptunit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kStageNames[] = {"extract", "generate", "run", "eval", "metrics", "report"};

constexpr std::string_view kPrompt = "prompt.prompt";
constexpr std::string_view kInputSpec = "is.txt";
constexpr std::string_view kRules = "rules.json";
constexpr std::string_view kTaskSpec = "taskspec.txt";
constexpr std::string_view kSpecPrompt = "specprompt.prompt";
constexpr std::string_view kTests = "tests.jsonl";
constexpr std::string_view kResults = "results.jsonl";
constexpr std::string_view kSpecResults = "spec_results.jsonl";
constexpr std::string_view kValidity = "validity.jsonl";
constexpr std::string_view kEvals = "evals.jsonl";
constexpr std::string_view kSpecEvals = "spec_evals.jsonl";
constexpr std::string_view kMetrics = "metrics.json";
constexpr std::string_view kManifest = "manifest.json";

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); }

std::string_view to_string(GeneratorChoice g) {
  switch (g) {
    case GeneratorChoice::RuleBased: return "rule_based";
    case GeneratorChoice::Baseline: return "baseline";
    case GeneratorChoice::Both: return "both";
  }
  return "";
}

GeneratorChoice generator_from_string(std::string_view s) {
  if (s == "rule_based") return GeneratorChoice::RuleBased;
  if (s == "baseline") return GeneratorChoice::Baseline;
  if (s == "both") return GeneratorChoice::Both;
  invalid("unknown generator `" + std::string(s) + "` (rule_based, baseline, both)");
}

bool wants_rule_based(GeneratorChoice g) { return g != GeneratorChoice::Baseline; }
bool wants_baseline(GeneratorChoice g) { return g != GeneratorChoice::RuleBased; }

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      invalid("unknown key `" + key + "` in " + std::string(where));
    }
  }
}

std::string file_digest(const fs::path& p) { return fs::exists(p) ? sha256_hex(read_file(p)) : std::string(); }

json parse_json_file(const fs::path& p) {
  auto j = json::parse(read_file(p), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::MalformedArtifact, p.filename().string() + ": not valid JSON");
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void remove_if_present(const fs::path& p) {
  std::error_code ec;
  fs::remove(p, ec);
}

struct ValidityEntry {
  std::string test_uid;
  Validity validity = Validity::Unknown;
  std::optional<std::string> explanation;
  std::optional<Verdict> verdict;
};

std::string validity_to_jsonl(std::span<const TestCase> tests, std::span<const std::optional<Verdict>> verdicts) {
  std::string out;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    json j = {
        {"test_uid", tests[i].test_uid},
        {"validity", to_string(tests[i].validity)},
        {"explanation", tests[i].validity_explanation ? json(*tests[i].validity_explanation) : json(nullptr)},
        {"verdict", verdicts[i] ? to_json(*verdicts[i]) : json(nullptr)},
    };
    out += j.dump() + "\n";
  }
  return out;
}

// Applies validity.jsonl to `tests` and returns the verdicts aligned with them.
std::vector<std::optional<Verdict>> apply_validity(std::string_view text, std::vector<TestCase>& tests) {
  std::map<std::string, ValidityEntry, std::less<>> by_uid;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::MalformedArtifact, "validity: bad JSON line");
    try {
      ValidityEntry e;
      e.test_uid = j.at("test_uid").get<std::string>();
      const auto v = j.at("validity").get<std::string>();
      e.validity = v == "valid" ? Validity::Valid : v == "invalid" ? Validity::Invalid : Validity::Unknown;
      if (!j.at("explanation").is_null()) e.explanation = j["explanation"].get<std::string>();
      if (!j.at("verdict").is_null()) e.verdict = verdict_from_json(j["verdict"]);
      by_uid[e.test_uid] = std::move(e);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedArtifact, std::string("validity: ") + e.what());
    }
  }
  std::vector<std::optional<Verdict>> out(tests.size());
  for (std::size_t i = 0; i < tests.size(); ++i) {
    auto it = by_uid.find(tests[i].test_uid);
    if (it == by_uid.end()) continue;
    tests[i].validity = it->second.validity;
    tests[i].validity_explanation = it->second.explanation;
    out[i] = it->second.verdict;
  }
  return out;
}

std::vector<TestCase> baseline_only(std::span<const TestCase> tests) {
  std::vector<TestCase> out;
  for (const auto& t : tests) {
    if (t.generator == Generator::Baseline) out.push_back(t);
  }
  return out;
}

}  // namespace

std::string_view to_string(Stage s) noexcept { return kStageNames[static_cast<int>(s)]; }

// ---- config ------------------------------------------------------------------

void PipelineConfig::validate() const {
  std::set<std::string> ids;
  for (const auto& m : models) {
    if (!ids.insert(m.id).second) invalid("duplicate model id `" + m.id + "`");
  }
  (void)model(meta_model);
  (void)model(judge_model);
  if (models_under_test.empty()) invalid("models_under_test is empty");
  for (const auto& id : models_under_test) (void)model(id);
  if (per_rule < 1) invalid("per_rule must be >= 1");
  if (baseline_num < 1) invalid("baseline_num must be >= 1");
  if (num_rules && *num_rules < 1) invalid("num_rules must be >= 1");
  if (repeats < 1) invalid("repeats must be >= 1");
  if (policy.retries < 0) invalid("policy.retries must be >= 0");
  if (policy.timeout.count() <= 0) invalid("policy.timeout_ms must be > 0");
  if (policy.backoff_initial.count() < 0) invalid("policy.backoff_initial_ms must be >= 0");
  if (max_inflight < 1) invalid("max_inflight must be >= 1");
  if (parallelism < 1) invalid("parallelism must be >= 1");
}

const ModelSpec& PipelineConfig::model(std::string_view id) const {
  for (const auto& m : models) {
    if (m.id == id) return m;
  }
  invalid("no model with id `" + std::string(id) + "`");
}

std::vector<ModelSpec> PipelineConfig::muts() const {
  std::vector<ModelSpec> out;
  for (const auto& id : models_under_test) out.push_back(model(id));
  return out;
}

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) invalid("config must be a JSON object");
  check_keys(j,
             {"models", "meta_model", "judge_model", "models_under_test", "generator", "per_rule", "baseline_num",
              "num_rules", "repeats", "cache", "policy", "max_inflight", "parallelism", "groundedness",
              "spec_agreement", "report"},
             "config");
  PipelineConfig c;
  try {
    for (auto m : j.at("models")) {
      if (m.is_object() && m.contains("script") && m["script"].is_string() && !base_dir.empty()) {
        const fs::path script = m["script"].get<std::string>();
        if (script.is_relative()) m["script"] = (base_dir / script).lexically_normal().string();
      }
      c.models.push_back(model_from_json(m));
    }
    c.meta_model = j.at("meta_model").get<std::string>();
    c.judge_model = j.at("judge_model").get<std::string>();
    c.models_under_test = j.at("models_under_test").get<std::vector<std::string>>();
    c.generator = generator_from_string(j.value("generator", "both"));
    c.per_rule = j.value("per_rule", c.per_rule);
    c.baseline_num = j.value("baseline_num", c.baseline_num);
    if (j.contains("num_rules") && !j["num_rules"].is_null()) c.num_rules = j["num_rules"].get<int>();
    c.repeats = j.value("repeats", c.repeats);
    if (j.contains("cache")) {
      const auto& cache = j["cache"];
      check_keys(cache, {"enabled", "dir"}, "cache");
      c.cache_enabled = cache.value("enabled", true);
      if (cache.contains("dir") && !cache["dir"].is_null()) c.cache_dir = cache["dir"].get<std::string>();
    }
    if (j.contains("policy")) {
      const auto& p = j["policy"];
      check_keys(p, {"retries", "timeout_ms", "backoff_initial_ms"}, "policy");
      c.policy.retries = p.value("retries", c.policy.retries);
      c.policy.timeout = std::chrono::milliseconds(p.value("timeout_ms", c.policy.timeout.count()));
      c.policy.backoff_initial = std::chrono::milliseconds(p.value("backoff_initial_ms", c.policy.backoff_initial.count()));
    }
    c.max_inflight = j.value("max_inflight", c.max_inflight);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.groundedness = j.value("groundedness", true);
    c.spec_agreement = j.value("spec_agreement", true);
    if (j.contains("report")) {
      const auto& r = j["report"];
      check_keys(r, {"formats", "sections"}, "report");
      for (const auto& f : r.value("formats", json::array())) c.report_formats.insert(report_format_from_string(f.get<std::string>()));
      for (const auto& s : r.value("sections", json::array())) c.report_sections.insert(report_section_from_string(s.get<std::string>()));
    }
  } catch (const json::exception& e) {
    invalid(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    invalid(e.what());
  }
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) invalid(path.string() + ": not valid JSON");
  return config_from_json(j, path.parent_path());
}

json to_json(const PipelineConfig& c) {
  json models = json::array();
  for (const auto& m : c.models) models.push_back(to_json(m));
  json formats = json::array(), sections = json::array();
  for (auto f : c.report_formats) formats.push_back(to_string(f));
  for (auto s : c.report_sections) sections.push_back(to_string(s));
  return {
      {"models", std::move(models)},
      {"meta_model", c.meta_model},
      {"judge_model", c.judge_model},
      {"models_under_test", c.models_under_test},
      {"generator", to_string(c.generator)},
      {"per_rule", c.per_rule},
      {"baseline_num", c.baseline_num},
      {"num_rules", c.num_rules ? json(*c.num_rules) : json(nullptr)},
      {"repeats", c.repeats},
      {"cache", {{"enabled", c.cache_enabled}, {"dir", c.cache_dir ? json(c.cache_dir->string()) : json(nullptr)}}},
      {"policy",
       {{"retries", c.policy.retries},
        {"timeout_ms", c.policy.timeout.count()},
        {"backoff_initial_ms", c.policy.backoff_initial.count()}}},
      {"max_inflight", c.max_inflight},
      {"parallelism", c.parallelism},
      {"groundedness", c.groundedness},
      {"spec_agreement", c.spec_agreement},
      {"report", {{"formats", std::move(formats)}, {"sections", std::move(sections)}}},
  };
}

// ---- manifest ----------------------------------------------------------------

json to_json(const RunManifest& m) {
  json stages = json::object();
  for (const auto& [name, rec] : m.stages) {
    stages[name] = {{"inputs", rec.inputs}, {"outputs", rec.outputs}, {"diagnostics", rec.diagnostics}};
  }
  return {
      {"run_id", m.run_id},         {"prompt_id", m.prompt_id},   {"config", m.config},
      {"templates", m.templates},   {"provenance", m.provenance}, {"stages", std::move(stages)},
  };
}

RunManifest manifest_from_json(const json& j) {
  try {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.prompt_id = j.at("prompt_id").get<std::string>();
    m.config = j.at("config");
    m.templates = j.at("templates").get<std::map<std::string, std::string>>();
    m.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    for (const auto& [name, rec] : j.at("stages").items()) {
      StageRecord r;
      r.inputs = rec.at("inputs").get<std::map<std::string, std::string>>();
      r.outputs = rec.at("outputs").get<std::map<std::string, std::string>>();
      r.diagnostics = rec.value("diagnostics", std::vector<std::string>{});
      m.stages[name] = std::move(r);
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedArtifact, std::string("manifest: ") + e.what());
  }
}

// ---- dry run -----------------------------------------------------------------

std::vector<RequestPlan> plan_requests(const fs::path& run_dir, const PipelineConfig& config,
                                       std::span<const Stage> stages) {
  const auto muts = config.models_under_test.size();
  const auto reps = static_cast<std::size_t>(config.repeats);

  std::optional<std::size_t> n_extracted, n_rules;
  if (fs::exists(run_dir / kRules)) {
    const auto rules = rules_from_json(parse_json_file(run_dir / kRules));
    n_extracted = rules.extracted().size();
    n_rules = rules.size();
  }
  std::optional<std::size_t> n_tests, n_baseline;
  bool tests_estimated = false;
  if (fs::exists(run_dir / kTests)) {
    const auto tests = tests_from_jsonl(read_file(run_dir / kTests));
    n_tests = tests.size();
    n_baseline = baseline_only(tests).size();
  } else {
    tests_estimated = true;
    n_baseline = wants_baseline(config.generator) ? config.baseline_num : 0;
    if (!wants_rule_based(config.generator)) n_tests = *n_baseline;
    else if (n_rules) n_tests = *n_rules * config.per_rule + *n_baseline;
  }
  const bool spec = config.spec_agreement && n_baseline.value_or(0) > 0;

  std::vector<RequestPlan> out;
  for (auto s : stages) {
    RequestPlan p{s, 0, false, {}};
    switch (s) {
      case Stage::Extract: {
        std::size_t fixed = 3 + (config.spec_agreement ? 1 : 0);
        p.detail = "input spec, rules, inverses";
        if (config.spec_agreement) p.detail += ", task spec";
        if (config.groundedness) {
          p.detail += ", one groundedness check per extracted rule";
          p.requests = n_extracted ? std::optional<std::size_t>(fixed + *n_extracted) : std::nullopt;
        } else {
          p.requests = fixed;
        }
        break;
      }
      case Stage::Generate:
        p.requests = (wants_rule_based(config.generator) ? 1 : 0) + (wants_baseline(config.generator) ? 1 : 0);
        p.detail = "generator: " + std::string(to_string(config.generator));
        break;
      case Stage::Run:
        p.estimated = tests_estimated;
        if (n_tests) {
          p.requests = (*n_tests + (spec ? *n_baseline : 0)) * muts * reps;
        } else {
          p.requests = std::nullopt;
        }
        p.detail = "tests x " + std::to_string(muts) + " models x " + std::to_string(reps) + " repeats" +
                   (spec ? ", plus baseline tests on the spec prompt" : "");
        break;
      case Stage::Eval:
        p.estimated = tests_estimated;
        if (n_tests) {
          p.requests = *n_tests + (*n_tests + (spec ? *n_baseline : 0)) * muts * reps;
        } else {
          p.requests = std::nullopt;
        }
        p.detail = "one validity check per test, one compliance check per run cell";
        break;
      case Stage::Metrics:
      case Stage::Report:
        p.detail = "local only";
        break;
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---- pipeline ----------------------------------------------------------------

Pipeline::Pipeline(fs::path run_dir, std::optional<PipelineConfig> config)
    : dir_(std::move(run_dir)), lock_(dir_ / ".lock") {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir_.string() + ": " + ec.message());

  std::FILE* f = std::fopen(lock_.c_str(), "wx");
  if (f == nullptr) {
    throw Error(ErrorCode::Io, dir_.string() + " is locked by another process (remove " + lock_.string() +
                                   " if it is stale)");
  }
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);

  try {
    if (fs::exists(file(kManifest))) manifest_ = manifest_from_json(parse_json_file(file(kManifest)));
    if (config) {
      config_ = std::move(*config);
    } else if (!manifest_.config.is_null()) {
      config_ = config_from_json(manifest_.config);
    } else {
      invalid("no config given and " + file(kManifest).string() + " has none");
    }
    config_.validate();
    config_.policy.use_cache = config_.cache_enabled;

    GatewayOptions opts;
    opts.max_inflight = config_.max_inflight;
    if (config_.cache_enabled) opts.cache_dir = config_.cache_dir.value_or(dir_ / "cache");
    gateway_ = std::make_unique<Gateway>(std::move(opts));
  } catch (...) {
    remove_if_present(lock_);
    throw;
  }
}

Pipeline::~Pipeline() { remove_if_present(lock_); }

std::string Pipeline::digest_of(std::string_view name) const { return file_digest(file(name)); }

ModelClient Pipeline::client(const std::string& model_id) const {
  return ModelClient{gateway_.get(), config_.model(model_id), config_.policy, config_.parallelism};
}

void Pipeline::require(Stage stage) const {
  const auto idx = static_cast<int>(stage);
  if (idx == 0) return;
  const auto prereq = static_cast<Stage>(idx - 1);
  const auto missing = [&](const std::string& why) {
    throw Error(ErrorCode::StageDependencyMissing, std::string(to_string(stage)) + " needs `" +
                                                       std::string(to_string(prereq)) + "` first: " + why);
  };
  const auto it = manifest_.stages.find(std::string(to_string(prereq)));
  if (it == manifest_.stages.end()) missing("stage not completed in " + dir_.string());
  for (const auto& [name, _] : it->second.outputs) {
    if (!fs::exists(file(name))) missing(name + " is missing");
  }
}

void Pipeline::refresh_provenance() {
  const auto it = manifest_.stages.find("extract");
  if (it == manifest_.stages.end()) return;
  for (const auto& [name, digest] : it->second.outputs) {
    if (name == kPrompt) continue;
    manifest_.provenance[name] = digest_of(name) == digest ? "extracted" : "edited";
  }
}

void Pipeline::complete(Stage stage, StageRecord record) {
  manifest_.stages[std::string(to_string(stage))] = std::move(record);
  manifest_.config = to_json(config_);
  // A later stage stays valid only while its prerequisite does and its
  // inputs still hash the same.
  for (int i = static_cast<int>(stage) + 1; i < static_cast<int>(std::size(kAllStages)); ++i) {
    const auto name = std::string(to_string(kAllStages[i]));
    auto it = manifest_.stages.find(name);
    if (it == manifest_.stages.end()) continue;
    bool stale = !manifest_.completed(kAllStages[i - 1]);
    for (const auto& [input, digest] : it->second.inputs) stale = stale || digest_of(input) != digest;
    if (stale) manifest_.stages.erase(it);
  }
  save_manifest();
}

void Pipeline::save_manifest() const { write_file_atomic(file(kManifest), dump(to_json(manifest_))); }

void Pipeline::extract(const PromptUnderTest& put, const std::string& run_id) {
  manifest_.prompt_id = put.id;
  manifest_.run_id = !run_id.empty() ? run_id : !manifest_.run_id.empty() ? manifest_.run_id : put.id;
  manifest_.templates.clear();
  for (auto t : kAllTemplates) manifest_.templates[std::string(template_name(t))] = template_digest(t);

  const auto meta = client(config_.meta_model);
  auto is = extract_input_spec(put, meta);
  auto rules = invert_rules(extract_output_rules(put, meta, config_.num_rules), meta);
  if (config_.groundedness) rules = check_groundedness(rules, put, meta);

  StageRecord rec;
  write_file_atomic(file(kPrompt), serialize_prompt(put));
  write_file_atomic(file(kInputSpec), serialize_input_spec(is));
  write_file_atomic(file(kRules), dump(rules_to_json(rules)));
  std::vector<std::string_view> outputs{kPrompt, kInputSpec, kRules};
  if (config_.spec_agreement) {
    const auto task = extract_task_spec(put, meta);
    write_file_atomic(file(kTaskSpec), task.intent_text + "\n");
    write_file_atomic(file(kSpecPrompt), serialize_prompt(build_spec_prompt(task, rules)));
    outputs.push_back(kTaskSpec);
    outputs.push_back(kSpecPrompt);
  } else {
    remove_if_present(file(kTaskSpec));
    remove_if_present(file(kSpecPrompt));
  }
  rec.inputs[std::string(kPrompt)] = digest_of(kPrompt);
  manifest_.provenance.clear();
  for (auto o : outputs) {
    rec.outputs[std::string(o)] = digest_of(o);
    if (o != kPrompt) manifest_.provenance[std::string(o)] = "extracted";
  }
  rec.diagnostics.push_back(std::to_string(is.statements.size()) + " input constraints, " +
                            std::to_string(rules.extracted().size()) + " rules, " +
                            std::to_string(rules.size() - rules.extracted().size()) + " inverse rules");
  complete(Stage::Extract, std::move(rec));
}

void Pipeline::generate() {
  require(Stage::Generate);
  refresh_provenance();
  const auto put = parse_prompt_file(read_file(file(kPrompt)));
  auto is = parse_input_spec(read_file(file(kInputSpec)), put.id);
  if (manifest_.provenance[std::string(kInputSpec)] == "edited") is.provenance = Provenance::Edited;
  const auto rules = rules_from_json(parse_json_file(file(kRules)), put.id);
  rules.validate();

  const auto meta = client(config_.meta_model);
  StageRecord rec;
  std::vector<TestCase> tests;
  const auto take = [&](GenerationResult g, std::string_view label) {
    for (const auto& d : g.diagnostics) {
      rec.diagnostics.push_back(std::string(label) + " line " + std::to_string(d.line) + ": " + d.message);
    }
    rec.diagnostics.push_back(std::string(label) + ": " + std::to_string(g.tests.size()) + " of " +
                              std::to_string(g.expected) + " requested tests");
    for (auto& t : g.tests) tests.push_back(std::move(t));
  };
  if (wants_rule_based(config_.generator)) {
    take(generate_rule_tests(put, is, rules, config_.per_rule, meta), "rule_based");
  }
  if (wants_baseline(config_.generator)) take(generate_baseline_tests(put, config_.baseline_num, meta), "baseline");

  write_file_atomic(file(kTests), tests_to_jsonl(tests));
  for (auto in : {kPrompt, kInputSpec, kRules}) rec.inputs[std::string(in)] = digest_of(in);
  rec.outputs[std::string(kTests)] = digest_of(kTests);
  complete(Stage::Generate, std::move(rec));
}

void Pipeline::run() {
  require(Stage::Run);
  refresh_provenance();
  const auto put = parse_prompt_file(read_file(file(kPrompt)));
  const auto tests = tests_from_jsonl(read_file(file(kTests)));
  const auto muts = config_.muts();
  const RunOptions opts{config_.repeats, config_.policy, config_.parallelism};

  StageRecord rec;
  const auto count_failures = [&](std::span<const TestRunResult> results, std::string_view label) {
    std::size_t failed = 0;
    for (const auto& r : results) failed += r.error.has_value();
    rec.diagnostics.push_back(std::string(label) + ": " + std::to_string(results.size()) + " cells, " +
                              std::to_string(failed) + " failed");
  };

  const auto results = run_matrix(*gateway_, put, tests, muts, opts);
  write_file_atomic(file(kResults), results_to_jsonl(results));
  count_failures(results, "prompt");
  for (auto in : {kPrompt, kTests}) rec.inputs[std::string(in)] = digest_of(in);
  rec.outputs[std::string(kResults)] = digest_of(kResults);

  const auto baseline = baseline_only(tests);
  if (config_.spec_agreement && fs::exists(file(kSpecPrompt)) && !baseline.empty()) {
    const auto spec_put = parse_prompt_file(read_file(file(kSpecPrompt)));
    const auto spec_results = run_matrix(*gateway_, spec_put, baseline, muts, opts);
    write_file_atomic(file(kSpecResults), results_to_jsonl(spec_results));
    count_failures(spec_results, "spec prompt");
    rec.inputs[std::string(kSpecPrompt)] = digest_of(kSpecPrompt);
    rec.outputs[std::string(kSpecResults)] = digest_of(kSpecResults);
  } else {
    remove_if_present(file(kSpecResults));
  }
  complete(Stage::Run, std::move(rec));
}

void Pipeline::eval() {
  require(Stage::Eval);
  refresh_provenance();
  const auto put = parse_prompt_file(read_file(file(kPrompt)));
  const auto is = parse_input_spec(read_file(file(kInputSpec)), put.id);
  const auto rules = rules_from_json(parse_json_file(file(kRules)), put.id);
  auto tests = tests_from_jsonl(read_file(file(kTests)));
  const auto results = results_from_jsonl(read_file(file(kResults)));
  const auto judge = client(config_.judge_model);

  StageRecord rec;
  const auto validity = judge_validity_all(is, tests, judge);
  write_file_atomic(file(kValidity), validity_to_jsonl(tests, validity));

  const auto note = [&](std::span<const EvalRecord> records, std::string_view label) {
    std::size_t unevaluated = 0;
    for (const auto& r : records) unevaluated += !r.evaluated();
    rec.diagnostics.push_back(std::string(label) + ": " + std::to_string(records.size()) + " cells, " +
                              std::to_string(unevaluated) + " unevaluated");
  };
  const auto records = evaluate_runs(put, results, tests, validity, &rules, judge);
  write_file_atomic(file(kEvals), evals_to_jsonl(records));
  note(records, "prompt");

  for (auto in : {kPrompt, kInputSpec, kRules, kTests, kResults}) rec.inputs[std::string(in)] = digest_of(in);
  for (auto out : {kValidity, kEvals}) rec.outputs[std::string(out)] = digest_of(out);

  if (fs::exists(file(kSpecResults))) {
    // Spec-prompt outputs are graded against the original prompt's rules.
    const auto spec_results = results_from_jsonl(read_file(file(kSpecResults)));
    const auto spec_records = evaluate_runs(put, spec_results, tests, validity, &rules, judge);
    write_file_atomic(file(kSpecEvals), evals_to_jsonl(spec_records));
    note(spec_records, "spec prompt");
    rec.inputs[std::string(kSpecResults)] = digest_of(kSpecResults);
    rec.outputs[std::string(kSpecEvals)] = digest_of(kSpecEvals);
  } else {
    remove_if_present(file(kSpecEvals));
  }
  complete(Stage::Eval, std::move(rec));
}

void Pipeline::metrics() {
  require(Stage::Metrics);
  auto tests = tests_from_jsonl(read_file(file(kTests)));
  apply_validity(read_file(file(kValidity)), tests);
  const auto rules = rules_from_json(parse_json_file(file(kRules)), manifest_.prompt_id);
  const auto records = evals_from_jsonl(read_file(file(kEvals)));
  std::vector<EvalRecord> spec_records;
  if (fs::exists(file(kSpecEvals))) spec_records = evals_from_jsonl(read_file(file(kSpecEvals)));

  bool judged = false;
  for (const auto* r : rules.extracted()) judged = judged || r->grounded != Groundedness::Unknown;
  const RuleSet* grounded = judged ? &rules : nullptr;

  StageRecord rec;
  const auto muts = config_.muts();
  RunMetrics m;
  try {
    m = compute_metrics(manifest_.prompt_id, muts, records, tests, grounded, spec_records);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptySlice) throw;
    rec.diagnostics.push_back(std::string("spec agreement skipped: ") + e.what());
    m = compute_metrics(manifest_.prompt_id, muts, records, tests, grounded);
  }
  write_file_atomic(file(kMetrics), dump(to_json(m)));
  for (auto in : {kTests, kValidity, kRules, kEvals, kSpecEvals}) {
    if (fs::exists(file(in))) rec.inputs[std::string(in)] = digest_of(in);
  }
  rec.outputs[std::string(kMetrics)] = digest_of(kMetrics);
  complete(Stage::Metrics, std::move(rec));
}

void Pipeline::report(std::span<const fs::path> with) {
  require(Stage::Report);
  ReportData data;
  data.metrics.push_back(metrics_from_json(parse_json_file(file(kMetrics))));
  for (const auto& other : with) {
    if (!fs::exists(other / kMetrics)) {
      throw Error(ErrorCode::StageDependencyMissing, (other / kMetrics).string() + " is missing");
    }
    data.metrics.push_back(metrics_from_json(parse_json_file(other / kMetrics)));
  }
  auto tests = tests_from_jsonl(read_file(file(kTests)));
  apply_validity(read_file(file(kValidity)), tests);
  const auto rules = rules_from_json(parse_json_file(file(kRules)), manifest_.prompt_id);
  const auto records = evals_from_jsonl(read_file(file(kEvals)));
  data.drilldown = drilldown_rows(manifest_.prompt_id, tests, &rules, records);

  ReportSpec spec{manifest_.run_id, config_.report_formats, config_.report_sections};
  if (spec.formats.empty()) spec.formats = ReportSpec::all("").formats;
  if (spec.sections.empty()) {
    bool grounded = true, agreement = true;
    for (const auto& m : data.metrics) {
      grounded = grounded && m.groundedness.has_value();
      agreement = agreement && m.spec_agreement.has_value();
    }
    spec.sections = {ReportSection::NoncomplianceTable, ReportSection::RuleKindTable,
                     ReportSection::ValidityChartData, ReportSection::PerTestDrilldown};
    if (grounded) spec.sections.insert(ReportSection::GroundednessTable);
    if (agreement) spec.sections.insert(ReportSection::SpecAgreement);
  }
  const auto files = render_report(spec, data);

  const auto dir = file("report");
  std::error_code ec;
  fs::remove_all(dir, ec);
  write_report(dir, files);

  StageRecord rec;
  for (auto in : {kMetrics, kEvals}) rec.inputs[std::string(in)] = digest_of(in);
  for (const auto& other : with) rec.inputs[(other / kMetrics).string()] = file_digest(other / kMetrics);
  for (const auto& [name, text] : files) rec.outputs["report/" + name] = sha256_hex(text);
  complete(Stage::Report, std::move(rec));
}

void Pipeline::all(const PromptUnderTest& put, const std::string& run_id) {
  extract(put, run_id);
  generate();
  run();
  eval();
  metrics();
  report();
}

}  // namespace promptunit
