#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptunit/prompt.hpp"

namespace promptunit {

enum class Provider { OpenAiCompatible, LocalCompatible, Mock };

std::string_view to_string(Provider p) noexcept;
Provider provider_from_string(std::string_view name);

struct Sampling {
  double temperature = 1.0;
  std::optional<int> max_tokens;

  friend bool operator==(const Sampling&, const Sampling&) = default;
};

struct ModelSpec {
  std::string id;
  Provider provider = Provider::OpenAiCompatible;
  std::string endpoint;  ///< base URL up to and including `/v1`; empty for mocks
  std::string model_name;
  Sampling sampling;
  std::string api_key_env;      ///< environment variable holding the bearer token
  std::filesystem::path script;  ///< mock script, mock provider only

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Validates a spec: id and model_name present, temperature >= 0, positive
/// max_tokens, endpoint for HTTP providers, script for mocks. Throws ConfigInvalid.
void validate(const ModelSpec& model);

/// Key for per-provider in-flight limits: the endpoint, or the mock script.
std::string provider_key(const ModelSpec& model);

nlohmann::json to_json(const ModelSpec& model);
ModelSpec model_from_json(const nlohmann::json& j);

struct Usage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int total_tokens = 0;

  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatResponse {
  std::string text;
  std::string finish_reason;
  Usage usage;
  std::chrono::milliseconds latency{0};
};

struct ChatExchange {
  std::vector<Message> request;
  ModelSpec model;
  ChatResponse response;
  std::string cache_key;
  bool from_cache = false;
  int attempts = 0;  ///< transport calls made; 0 on a cache hit
  std::chrono::milliseconds total_backoff{0};
};

struct RequestPolicy {
  int retries = 3;
  /// Per-attempt transport timeout; also the cap on cumulative backoff sleep.
  std::chrono::milliseconds timeout{60000};
  bool use_cache = true;
  std::chrono::milliseconds backoff_initial{500};
  /// Mixed into the cache key when non-empty, e.g. to keep repeated runs of
  /// the same request apart.
  std::string cache_salt;
};

/// Digest over (model_name, sampling, messages) and the optional salt.
std::string cache_key(const ModelSpec& model, std::span<const Message> messages,
                      std::string_view salt = {});

/// One backend. Implementations throw ProviderError with code Timeout,
/// RateLimited or ProviderError, or Error(MockScriptExhausted).
class Transport {
public:
  virtual ~Transport() = default;
  virtual ChatResponse send(const ModelSpec& model, std::span<const Message> messages,
                            std::chrono::milliseconds timeout) = 0;
};

/// OpenAI-compatible `POST <endpoint>/chat/completions`.
class HttpTransport final : public Transport {
public:
  ChatResponse send(const ModelSpec& model, std::span<const Message> messages,
                    std::chrono::milliseconds timeout) override;
};

/// Request body sent by HttpTransport.
nlohmann::json chat_request_body(const ModelSpec& model, std::span<const Message> messages);
/// Extracts `choices[0].message.content`, finish reason and usage. Throws ProviderError.
ChatResponse parse_chat_response(std::string_view body);

/// Content-addressed response store: `<dir>/<key[0:2]>/<key>.json`.
class ResponseCache {
public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::optional<ChatResponse> get(const std::string& key) const;
  void put(const std::string& key, const ModelSpec& model, std::span<const Message> messages,
           const ChatResponse& response) const;
  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

private:
  std::filesystem::path path_for(const std::string& key) const;
  std::filesystem::path dir_;
};

struct GatewayOptions {
  std::optional<std::filesystem::path> cache_dir;
  std::size_t max_inflight = 4;  ///< per provider key
};

struct GatewayStats {
  std::size_t transport_calls = 0;
  std::size_t cache_hits = 0;
};

/// Thread-safe chat-completion front end. Callers block until the exchange
/// completes; concurrent callers are throttled per provider key.
class Gateway {
public:
  explicit Gateway(GatewayOptions options = {});
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  ChatExchange complete(const ModelSpec& model, std::span<const Message> messages,
                        const RequestPolicy& policy = {});

  /// Routes every request for `model_id` to `transport` (tests, custom backends).
  void register_transport(const std::string& model_id, std::shared_ptr<Transport> transport);

  [[nodiscard]] GatewayStats stats() const noexcept;
  [[nodiscard]] std::size_t max_inflight() const noexcept { return options_.max_inflight; }

private:
  class Limiter;
  Transport& transport_for(const ModelSpec& model);
  Limiter& limiter_for(const std::string& key);

  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Transport>> custom_;
  std::map<std::string, std::shared_ptr<Transport>> mocks_;
  std::map<std::string, std::unique_ptr<Limiter>> limiters_;
  HttpTransport http_;
  std::atomic<std::size_t> transport_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

}  // namespace promptunit
