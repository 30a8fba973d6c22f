#pragma once

// Stage orchestration over a run directory. Each stage reads its inputs
// from files written by earlier stages (so any of them may be hand-edited in
// between), records input/output digests in manifest.json, and drops the
// records of later stages whose inputs no longer match.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptunit/gateway.hpp"
#include "promptunit/report.hpp"

namespace promptunit {

enum class GeneratorChoice { RuleBased, Baseline, Both };

struct PipelineConfig {
  std::vector<ModelSpec> models;  ///< registry; the roles below refer to ids
  std::string meta_model;
  std::string judge_model;
  std::vector<std::string> models_under_test;

  GeneratorChoice generator = GeneratorChoice::Both;
  int per_rule = 2;
  int baseline_num = 10;
  std::optional<int> num_rules;  ///< ask for at least this many rules
  int repeats = 1;

  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_dir;  ///< default <run-dir>/cache
  RequestPolicy policy;
  std::size_t max_inflight = 4;
  std::size_t parallelism = 4;

  bool groundedness = true;
  bool spec_agreement = true;

  std::set<ReportFormat> report_formats;    ///< empty = all
  std::set<ReportSection> report_sections;  ///< empty = every section with data

  /// Throws ConfigInvalid on dangling role ids, bad counts, or duplicate models.
  void validate() const;
  [[nodiscard]] const ModelSpec& model(std::string_view id) const;  // ConfigInvalid
  [[nodiscard]] std::vector<ModelSpec> muts() const;
};

/// Relative mock script paths resolve against `base_dir`.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& c);

enum class Stage { Extract, Generate, Run, Eval, Metrics, Report };
inline constexpr Stage kAllStages[] = {Stage::Extract, Stage::Generate, Stage::Run,
                                       Stage::Eval,    Stage::Metrics,  Stage::Report};
std::string_view to_string(Stage s) noexcept;

struct StageRecord {
  std::map<std::string, std::string> inputs;   ///< artifact -> sha256
  std::map<std::string, std::string> outputs;  ///< artifact -> sha256
  std::vector<std::string> diagnostics;
};

struct RunManifest {
  std::string run_id;
  std::string prompt_id;
  nlohmann::json config;  ///< snapshot of the config the last stage ran with
  std::map<std::string, std::string> templates;  ///< template name -> digest
  std::map<std::string, std::string> provenance;  ///< extract output -> extracted|edited
  std::map<std::string, StageRecord> stages;

  [[nodiscard]] bool completed(Stage s) const { return stages.contains(std::string(to_string(s))); }
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Gateway requests a stage would issue (cache hits included).
struct RequestPlan {
  Stage stage;
  std::optional<std::size_t> requests;  ///< unknown until an upstream artifact exists
  bool estimated = false;               ///< derived from configured counts, not artifacts
  std::string detail;
};

/// Reads whatever artifacts exist; never touches the network or writes.
std::vector<RequestPlan> plan_requests(const std::filesystem::path& run_dir, const PipelineConfig& config,
                                       std::span<const Stage> stages);

/// Exclusive owner of a run directory for the lifetime of the object.
class Pipeline {
public:
  /// Creates the directory and takes `.lock` (Io if already held). When
  /// `config` is empty the manifest's snapshot is used (ConfigInvalid if none).
  Pipeline(std::filesystem::path run_dir, std::optional<PipelineConfig> config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void extract(const PromptUnderTest& put, const std::string& run_id = {});
  void generate();
  void run();
  void eval();
  void metrics();
  /// `with`: other run directories whose metrics join the comparison tables.
  void report(std::span<const std::filesystem::path> with = {});
  void all(const PromptUnderTest& put, const std::string& run_id = {});

  [[nodiscard]] const RunManifest& manifest() const noexcept { return manifest_; }
  [[nodiscard]] const PipelineConfig& config() const noexcept { return config_; }
  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
  Gateway& gateway() noexcept { return *gateway_; }

private:
  std::filesystem::path file(std::string_view name) const { return dir_ / name; }
  std::string digest_of(std::string_view name) const;
  void require(Stage stage) const;
  void refresh_provenance();
  void complete(Stage stage, StageRecord record);
  void save_manifest() const;
  ModelClient client(const std::string& model_id) const;

  std::filesystem::path dir_;
  std::filesystem::path lock_;
  PipelineConfig config_;
  RunManifest manifest_;
  std::unique_ptr<Gateway> gateway_;
};

}  // namespace promptunit
