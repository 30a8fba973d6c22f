#include <sys/wait.h>

#include <fstream>

#include <gtest/gtest.h>

#include "promptunit/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int rc = -1;
  std::string out;
  std::string err;
};

Outcome cli(const pu_test::TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" + PU_CLI_PATH + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = promptunit::read_file(out);
  o.err = promptunit::read_file(err);
  return o;
}

std::string config_arg() { return "--config '" + (pu_test::kDataDir / "pos" / "config.json").string() + "'"; }

}  // namespace

TEST(Cli, PipelineOnBenchmark) {
  pu_test::TempDir dir;
  const auto o = cli(dir, config_arg() + " --run-dir r pipeline bench:speech-tag");
  ASSERT_EQ(o.rc, 0) << o.err;
  EXPECT_EQ(o.out, "r\n");
  EXPECT_NE(o.err.find("generate: rule_based line 17"), std::string::npos) << o.err;
  EXPECT_TRUE(fs::exists(dir / "r" / "report" / "report.md"));
}

TEST(Cli, StagesInOrderThenReportSubset) {
  pu_test::TempDir dir;
  ASSERT_EQ(cli(dir, config_arg() + " extract bench:speech-tag").rc, 0);
  EXPECT_TRUE(fs::exists(dir / "runs" / "speech-tag" / "rules.json"));
  // Later stages find the config in the manifest.
  for (const char* stage : {"generate", "run", "eval", "metrics"}) {
    const auto o = cli(dir, std::string("--run-id speech-tag ") + stage);
    ASSERT_EQ(o.rc, 0) << stage << ": " << o.err;
  }
  const auto o = cli(dir, "--run-id speech-tag report --format csv --section noncompliance_table");
  ASSERT_EQ(o.rc, 0) << o.err;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "runs" / "speech-tag" / "report")) {
    names.push_back(e.path().filename().string());
  }
  EXPECT_EQ(names, std::vector<std::string>{"noncompliance.csv"});
}

TEST(Cli, ExitCodes) {
  pu_test::TempDir dir;
  // Stage dependency missing.
  EXPECT_EQ(cli(dir, config_arg() + " --run-dir r run").rc, 3);
  // Bad config.
  std::ofstream(dir / "bad.json") << R"({"models": [], "surprise": true})";
  EXPECT_EQ(cli(dir, "--config bad.json --run-dir r generate").rc, 2);
  // No config anywhere.
  EXPECT_EQ(cli(dir, "--run-dir empty generate").rc, 2);
  // Usage errors.
  EXPECT_EQ(cli(dir, "").rc, 2);
  EXPECT_EQ(cli(dir, "frobnicate").rc, 2);
  // Unknown benchmark.
  EXPECT_NE(cli(dir, config_arg() + " extract bench:nope").rc, 0);
}

TEST(Cli, DryRunMakesNoRequests) {
  pu_test::TempDir dir;
  const auto o = cli(dir, config_arg() + " --run-dir r --dry-run pipeline bench:speech-tag");
  ASSERT_EQ(o.rc, 0) << o.err;
  EXPECT_NE(o.out.find("extract: unknown requests"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("generate: 2 requests"), std::string::npos) << o.out;
  EXPECT_NE(o.out.find("total: >= "), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "r"));
}

TEST(Cli, ListsBenchmarks) {
  pu_test::TempDir dir;
  const auto o = cli(dir, "benchmarks");
  ASSERT_EQ(o.rc, 0);
  EXPECT_TRUE(o.out.starts_with("speech-tag\t"));
  EXPECT_EQ(std::count(o.out.begin(), o.out.end(), '\n'), 8);
}
