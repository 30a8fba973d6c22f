// promptunit: command-line driver for the prompt test pipeline.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"
#include "promptunit/pipeline.hpp"
#include "promptunit/resources.hpp"

namespace fs = std::filesystem;
using namespace promptunit;

namespace {

struct Options {
  std::string config;
  std::string run_dir;
  std::string run_id;
  std::string cache_dir;
  bool no_cache = false;
  bool dry_run = false;

  std::string prompt;
  std::string generator;
  std::optional<int> per_rule;
  std::optional<int> num;
  std::optional<int> num_rules;
  std::optional<int> repeats;
  std::vector<std::string> models;
  std::string judge;
  std::vector<std::string> formats;
  std::vector<std::string> sections;
  std::vector<std::string> with;
};

PromptUnderTest load_prompt(const std::string& spec) {
  constexpr std::string_view bench = "bench:";
  if (spec.starts_with(bench)) return find_benchmark(spec.substr(bench.size()));
  return load_prompt_file(spec);
}

fs::path resolve_run_dir(const Options& o, const std::optional<PromptUnderTest>& put) {
  if (!o.run_dir.empty()) return o.run_dir;
  if (!o.run_id.empty()) return fs::path("runs") / o.run_id;
  if (put) return fs::path("runs") / put->id;
  throw Error(ErrorCode::ConfigInvalid, "pass --run-dir or --run-id");
}

// Explicit config file, else the run's manifest snapshot, with flags on top.
std::optional<PipelineConfig> resolve_config(const Options& o, const fs::path& run_dir) {
  std::optional<PipelineConfig> c;
  if (!o.config.empty()) {
    c = load_config(o.config);
  } else if (fs::exists(run_dir / "manifest.json")) {
    auto j = nlohmann::json::parse(read_file(run_dir / "manifest.json"), nullptr, false);
    if (!j.is_discarded() && j.contains("config") && !j["config"].is_null()) c = config_from_json(j["config"]);
  }
  if (!c) throw Error(ErrorCode::ConfigInvalid, "no --config given and no manifest in " + run_dir.string());

  auto patched = to_json(*c);
  if (!o.generator.empty()) patched["generator"] = o.generator;
  if (o.per_rule) patched["per_rule"] = *o.per_rule;
  if (o.num) patched["baseline_num"] = *o.num;
  if (o.num_rules) patched["num_rules"] = *o.num_rules;
  if (o.repeats) patched["repeats"] = *o.repeats;
  if (!o.models.empty()) patched["models_under_test"] = o.models;
  if (!o.judge.empty()) patched["judge_model"] = o.judge;
  if (!o.cache_dir.empty()) patched["cache"]["dir"] = o.cache_dir;
  if (o.no_cache) patched["cache"]["enabled"] = false;
  if (!o.formats.empty()) patched["report"]["formats"] = o.formats;
  if (!o.sections.empty()) patched["report"]["sections"] = o.sections;
  return config_from_json(patched);
}

void print_plan(const fs::path& run_dir, const PipelineConfig& config, std::span<const Stage> stages) {
  std::size_t total = 0;
  bool known = true;
  for (const auto& p : plan_requests(run_dir, config, stages)) {
    std::cout << to_string(p.stage) << ": ";
    if (p.requests) {
      std::cout << (p.estimated ? "~" : "") << *p.requests;
      total += *p.requests;
    } else {
      std::cout << "unknown";
      known = false;
    }
    std::cout << " requests (" << p.detail << ")\n";
  }
  std::cout << "total: " << (known ? "" : ">= ") << total << " requests\n";
}

int dispatch(const std::string& command, const Options& o) {
  if (command == "benchmarks") {
    for (const auto& p : list_benchmarks()) std::cout << p.id << "\t" << p.name << "\n";
    return 0;
  }

  std::optional<PromptUnderTest> put;
  if (command == "extract" || command == "pipeline") put = load_prompt(o.prompt);
  const auto run_dir = resolve_run_dir(o, put);
  auto config = *resolve_config(o, run_dir);

  static const std::map<std::string, std::vector<Stage>> kStages = {
      {"extract", {Stage::Extract}}, {"generate", {Stage::Generate}}, {"run", {Stage::Run}},
      {"eval", {Stage::Eval}},       {"metrics", {Stage::Metrics}},   {"report", {Stage::Report}},
      {"pipeline", {std::begin(kAllStages), std::end(kAllStages)}},
  };
  if (o.dry_run) {
    print_plan(run_dir, config, kStages.at(command));
    return 0;
  }

  Pipeline p(run_dir, std::move(config));
  std::vector<fs::path> with(o.with.begin(), o.with.end());
  if (command == "extract") p.extract(*put, o.run_id);
  else if (command == "generate") p.generate();
  else if (command == "run") p.run();
  else if (command == "eval") p.eval();
  else if (command == "metrics") p.metrics();
  else if (command == "report") p.report(with);
  else if (command == "pipeline") p.all(*put, o.run_id);

  for (auto s : kStages.at(command)) {
    const auto it = p.manifest().stages.find(std::string(to_string(s)));
    if (it == p.manifest().stages.end()) continue;
    for (const auto& d : it->second.diagnostics) std::cerr << to_string(s) << ": " << d << "\n";
  }
  std::cout << p.dir().string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generate, run and judge unit tests for prompts."};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "Pipeline config (JSON)");
  app.add_option("--run-dir", o.run_dir, "Run directory (default runs/<run-id>)");
  app.add_option("--run-id", o.run_id, "Run id (default: the prompt id)");
  app.add_option("--cache-dir", o.cache_dir, "Response cache directory (default <run-dir>/cache)");
  app.add_flag("--no-cache", o.no_cache, "Bypass the response cache");
  app.add_flag("--dry-run", o.dry_run, "Print the gateway requests each stage would make and exit");

  auto prompt_opt = [&](CLI::App* sub) {
    sub->add_option("prompt", o.prompt, "Prompt file, or bench:<id> for a bundled benchmark")->required();
    sub->add_option("--num-rules", o.num_rules, "Ask for at least this many output rules");
  };
  auto generate_opts = [&](CLI::App* sub) {
    sub->add_option("--generator", o.generator, "rule_based, baseline or both")
        ->check(CLI::IsMember({"rule_based", "baseline", "both"}));
    sub->add_option("--per-rule", o.per_rule, "Tests per rule");
    sub->add_option("--num", o.num, "Baseline test count");
  };
  auto run_opts = [&](CLI::App* sub) {
    sub->add_option("--models", o.models, "Model ids under test (from the config)")->delimiter(',');
    sub->add_option("--repeats", o.repeats, "Runs per (test, model) cell");
  };
  auto eval_opts = [&](CLI::App* sub) { sub->add_option("--judge", o.judge, "Judge model id (from the config)"); };
  auto report_opts = [&](CLI::App* sub) {
    sub->add_option("--format", o.formats, "markdown, json, csv (repeatable)");
    sub->add_option("--section", o.sections, "Report section (repeatable)");
    sub->add_option("--with", o.with, "Other run directories to include in the comparison tables");
  };

  auto* extract = app.add_subcommand("extract", "Extract the input spec, output rules, inverses and task spec");
  prompt_opt(extract);
  generate_opts(app.add_subcommand("generate", "Generate rule-based and/or baseline tests"));
  run_opts(app.add_subcommand("run", "Run every test on every model under test"));
  eval_opts(app.add_subcommand("eval", "Judge test validity and output compliance"));
  app.add_subcommand("metrics", "Compute metrics.json");
  report_opts(app.add_subcommand("report", "Render the report"));
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  prompt_opt(pipeline);
  generate_opts(pipeline);
  run_opts(pipeline);
  eval_opts(pipeline);
  report_opts(pipeline);
  app.add_subcommand("benchmarks", "List the bundled benchmark prompts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    return dispatch(app.get_subcommands().front()->get_name(), o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
