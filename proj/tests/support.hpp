#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "promptunit/gateway.hpp"
#include "promptunit/io.hpp"
#include "promptunit/model_client.hpp"
#include "promptunit/pipeline.hpp"
#include "promptunit/prompt.hpp"
#include "promptunit/resources.hpp"

namespace pu_test {

inline const std::filesystem::path kDataDir = PU_TEST_DATA_DIR;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("promptunit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

/// Transport answering through a callback; records requests and tracks how
/// many calls are in flight at once.
class FakeTransport final : public promptunit::Transport {
public:
  using Handler = std::function<std::string(std::span<const promptunit::Message>)>;

  explicit FakeTransport(Handler handler, std::chrono::milliseconds delay = {})
      : handler_(std::move(handler)), delay_(delay) {}

  promptunit::ChatResponse send(const promptunit::ModelSpec&, std::span<const promptunit::Message> messages,
                                std::chrono::milliseconds) override {
    const int now = ++inflight_;
    int seen = peak_.load();
    while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
    }
    {
      std::lock_guard lock(mu_);
      requests_.emplace_back(messages.begin(), messages.end());
    }
    ++calls_;
    if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
    struct Leave {
      std::atomic<int>& n;
      ~Leave() { --n; }
    } leave{inflight_};
    promptunit::ChatResponse r;
    r.text = handler_(messages);
    r.finish_reason = "stop";
    return r;
  }

  [[nodiscard]] int calls() const { return calls_; }
  [[nodiscard]] int peak_inflight() const { return peak_; }
  [[nodiscard]] std::vector<std::vector<promptunit::Message>> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }

private:
  Handler handler_;
  std::chrono::milliseconds delay_;
  std::atomic<int> inflight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::vector<promptunit::Message>> requests_;
};

/// An HTTP-provider spec that is never contacted because tests route it to a
/// registered transport.
inline promptunit::ModelSpec fake_model(std::string id) {
  promptunit::ModelSpec m;
  m.id = id;
  m.provider = promptunit::Provider::OpenAiCompatible;
  m.endpoint = "http://127.0.0.1:9/v1";
  m.model_name = "fake-" + id;
  m.sampling.temperature = 0;
  return m;
}

inline promptunit::RequestPolicy fast_policy() {
  promptunit::RequestPolicy p;
  p.retries = 0;
  p.timeout = std::chrono::milliseconds(2000);
  p.backoff_initial = std::chrono::milliseconds(0);
  p.use_cache = false;
  return p;
}

/// Client for `model` whose requests go to `transport`.
inline promptunit::ModelClient fake_client(promptunit::Gateway& gw, const std::string& id,
                                           std::shared_ptr<promptunit::Transport> transport,
                                           std::size_t parallelism = 4) {
  auto m = fake_model(id);
  gw.register_transport(m.id, std::move(transport));
  return promptunit::ModelClient{&gw, m, fast_policy(), parallelism};
}

inline std::string joined(std::span<const promptunit::Message> messages) {
  std::string out;
  for (const auto& m : messages) out += m.text + "\n";
  return out;
}

/// Every file under `dir` except the cache and the lock, keyed by relative path.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir).generic_string();
    if (rel.starts_with("cache/") || rel == ".lock") continue;
    out[rel] = promptunit::read_file(e.path());
  }
  return out;
}

inline promptunit::PipelineConfig pos_config() {
  return promptunit::load_config(kDataDir / "pos" / "config.json");
}

inline promptunit::PromptUnderTest pos_prompt() {
  return promptunit::find_benchmark("speech-tag");
}

}  // namespace pu_test
