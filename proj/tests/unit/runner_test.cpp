#include <random>

#include <gtest/gtest.h>

#include "promptunit/error.hpp"
#include "promptunit/runner.hpp"
#include "support.hpp"

using namespace promptunit;
using pu_test::FakeTransport;

namespace {

std::vector<TestCase> make_tests(std::size_t n) {
  std::vector<TestCase> tests;
  for (std::size_t i = 0; i < n; ++i) {
    TestCase t;
    t.test_uid = "baseline-" + std::to_string(i + 1);
    t.generator = Generator::Baseline;
    t.seq = static_cast<int>(i + 1);
    t.test_input = "sentence " + std::to_string(i) + "; word";
    tests.push_back(t);
  }
  return tests;
}

struct Matrix {
  Gateway gw;
  std::vector<ModelSpec> muts;
  std::vector<std::shared_ptr<FakeTransport>> transports;

  void add(const std::string& id, FakeTransport::Handler h, std::chrono::milliseconds delay = {}) {
    auto t = std::make_shared<FakeTransport>(std::move(h), delay);
    muts.push_back(pu_test::fake_model(id));
    gw.register_transport(id, t);
    transports.push_back(t);
  }
};

RunOptions options(int repeats, std::size_t parallelism = 4) {
  RunOptions o;
  o.repeats = repeats;
  o.policy = pu_test::fast_policy();
  o.parallelism = parallelism;
  return o;
}

}  // namespace

TEST(RunMatrix, CardinalityAndOrderOnRandomSizes) {
  std::mt19937 rng(5);
  for (int iter = 0; iter < 20; ++iter) {
    const std::size_t nt = 1 + rng() % 6, nm = 1 + rng() % 3;
    const int reps = 1 + static_cast<int>(rng() % 3);
    Matrix m;
    for (std::size_t i = 0; i < nm; ++i) {
      const auto id = "m" + std::to_string(i);
      m.add(id, [id](auto msgs) { return id + ":" + msgs.back().text; });
    }
    const auto tests = make_tests(nt);
    const auto results = run_matrix(m.gw, pu_test::pos_prompt(), tests, m.muts, options(reps, 1 + rng() % 5));
    ASSERT_EQ(results.size(), nt * nm * static_cast<std::size_t>(reps));
    std::size_t k = 0;
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t mi = 0; mi < nm; ++mi) {
        for (int r = 1; r <= reps; ++r, ++k) {
          const auto& res = results[k];
          EXPECT_EQ(res.test_uid, tests[t].test_uid);
          EXPECT_EQ(res.model_id, m.muts[mi].id);
          EXPECT_EQ(res.repeat, r);
          ASSERT_TRUE(res.output_text);
          EXPECT_EQ(*res.output_text, m.muts[mi].id + ":" + tests[t].test_input);
          EXPECT_FALSE(res.error);
          EXPECT_EQ(res.messages_digest.size(), 64u);
        }
      }
    }
  }
}

TEST(RunMatrix, FailingProviderIsIsolated) {
  Matrix m;
  m.add("good", [](auto) { return std::string("NN"); });
  m.add("bad", [](auto) -> std::string { throw ProviderError(ErrorCode::ProviderError, 500, "boom"); });
  m.add("also-good", [](auto) { return std::string("VB"); });
  const auto tests = make_tests(5);
  const auto results = run_matrix(m.gw, pu_test::pos_prompt(), tests, m.muts, options(2));
  ASSERT_EQ(results.size(), 30u);
  for (const auto& r : results) {
    if (r.model_id == "bad") {
      EXPECT_FALSE(r.output_text);
      ASSERT_TRUE(r.error);
      EXPECT_EQ(r.error->status, 500);
      EXPECT_EQ(r.error->message, "boom");
    } else {
      EXPECT_TRUE(r.output_text);
      EXPECT_FALSE(r.error);
    }
  }
}

TEST(RunMatrix, InputIsRenderedIntoPromptVerbatim) {
  Matrix m;
  m.add("a", [](auto msgs) { return pu_test::joined(msgs); });
  const auto put = pu_test::pos_prompt();
  auto tests = make_tests(1);
  tests[0].test_input = "{{sentenceword}} literal";
  const auto results = run_matrix(m.gw, put, tests, m.muts, options(1));
  EXPECT_EQ(*results[0].output_text, put.messages[0].text + "\n{{sentenceword}} literal\n");
}

TEST(RunMatrix, RepeatsBypassEachOthersCache) {
  pu_test::TempDir dir;
  GatewayOptions go;
  go.cache_dir = dir.path();
  Gateway gw(go);
  std::atomic<int> n{0};
  auto t = std::make_shared<FakeTransport>([&](auto) { return "reply " + std::to_string(++n); });
  gw.register_transport("a", t);
  const std::vector<ModelSpec> muts{pu_test::fake_model("a")};
  auto o = options(3, 1);
  o.policy.use_cache = true;
  const auto tests = make_tests(1);
  const auto first = run_matrix(gw, pu_test::pos_prompt(), tests, muts, o);
  EXPECT_EQ(t->calls(), 3);
  EXPECT_NE(*first[0].output_text, *first[1].output_text);
  const auto second = run_matrix(gw, pu_test::pos_prompt(), tests, muts, o);
  EXPECT_EQ(t->calls(), 3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(second[i].output_text, first[i].output_text);
}

TEST(RunMatrix, Preconditions) {
  Matrix m;
  m.add("a", [](auto) { return std::string("x"); });
  const auto tests = make_tests(1);
  EXPECT_THROW(run_matrix(m.gw, pu_test::pos_prompt(), {}, m.muts, options(1)), std::invalid_argument);
  EXPECT_THROW(run_matrix(m.gw, pu_test::pos_prompt(), tests, {}, options(1)), std::invalid_argument);
  EXPECT_THROW(run_matrix(m.gw, pu_test::pos_prompt(), tests, m.muts, options(0)), std::invalid_argument);
}

TEST(RunResults, JsonlRoundTrip) {
  TestRunResult ok;
  ok.test_uid = "rule-1-1";
  ok.model_id = "m";
  ok.repeat = 2;
  ok.messages_digest = std::string(64, 'a');
  ok.output_text = "line\n\"q\"";
  ok.usage = Usage{3, 4, 7};
  TestRunResult bad = ok;
  bad.output_text.reset();
  bad.error = CellError{ErrorCode::Timeout, 0, "slow"};
  const std::vector<TestRunResult> rs{ok, bad};
  const auto back = results_from_jsonl(results_to_jsonl(rs));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(to_json(back[i]), to_json(rs[i]));
  EXPECT_EQ(back[1].error, bad.error);
  EXPECT_THROW(results_from_jsonl(R"({"test_uid":"x","model_id":"m","output_text":null,"error":null})"), Error);
}
