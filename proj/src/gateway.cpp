#include "promptunit/gateway.hpp"

#include <httplib.h>

#include <cstdlib>
#include <regex>
#include <thread>

#include "promptunit/error.hpp"
#include "promptunit/io.hpp"
#include "promptunit/mock.hpp"

namespace promptunit {

using nlohmann::json;

std::string_view to_string(Provider p) noexcept {
  switch (p) {
    case Provider::OpenAiCompatible: return "openai_compatible";
    case Provider::LocalCompatible: return "local_compatible";
    case Provider::Mock: return "mock";
  }
  return "";
}

Provider provider_from_string(std::string_view name) {
  if (name == "openai_compatible") return Provider::OpenAiCompatible;
  if (name == "local_compatible") return Provider::LocalCompatible;
  if (name == "mock") return Provider::Mock;
  throw Error(ErrorCode::ConfigInvalid, "unknown provider `" + std::string(name) + "`");
}

void validate(const ModelSpec& model) {
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ConfigInvalid, "model `" + model.id + "`: " + what);
  };
  if (model.id.empty()) throw Error(ErrorCode::ConfigInvalid, "model without id");
  if (model.model_name.empty()) fail("model_name is required");
  if (!(model.sampling.temperature >= 0.0)) fail("temperature must be >= 0");
  if (model.sampling.max_tokens && *model.sampling.max_tokens <= 0) fail("max_tokens must be positive");
  if (model.provider == Provider::Mock) {
    if (model.script.empty()) fail("mock provider requires a script");
  } else if (model.endpoint.empty()) {
    fail("endpoint is required");
  }
}

std::string provider_key(const ModelSpec& model) {
  if (model.provider == Provider::Mock) return "mock:" + model.script.string();
  return model.endpoint;
}

json to_json(const ModelSpec& model) {
  json j = {
      {"id", model.id},
      {"provider", to_string(model.provider)},
      {"model_name", model.model_name},
      {"temperature", model.sampling.temperature},
      {"max_tokens", model.sampling.max_tokens ? json(*model.sampling.max_tokens) : json(nullptr)},
  };
  if (!model.endpoint.empty()) j["endpoint"] = model.endpoint;
  if (!model.api_key_env.empty()) j["api_key_env"] = model.api_key_env;
  if (!model.script.empty()) j["script"] = model.script.string();
  return j;
}

ModelSpec model_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "model entry must be an object");
  try {
    ModelSpec m;
    m.id = j.value("id", "");
    m.provider = provider_from_string(j.value("provider", "openai_compatible"));
    m.endpoint = j.value("endpoint", "");
    m.model_name = j.value("model_name", "");
    m.api_key_env = j.value("api_key_env", "");
    m.script = j.value("script", "");
    m.sampling.temperature = j.value("temperature", 1.0);
    if (j.contains("max_tokens") && !j["max_tokens"].is_null()) m.sampling.max_tokens = j["max_tokens"].get<int>();
    if (m.provider == Provider::Mock && m.model_name.empty() && !m.script.empty()) {
      auto derived = mock_from_script(m.script, m.id);
      m.model_name = derived.model_name;
      if (m.id.empty()) m.id = derived.id;
    }
    validate(m);
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("model entry: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedScript) throw Error(ErrorCode::ConfigInvalid, e.what());
    throw;
  }
}

std::string cache_key(const ModelSpec& model, std::span<const Message> messages, std::string_view salt) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({to_string(m.role), m.text});
  json key = {
      {"model_name", model.model_name},
      {"temperature", model.sampling.temperature},
      {"max_tokens", model.sampling.max_tokens ? json(*model.sampling.max_tokens) : json(nullptr)},
      {"messages", std::move(msgs)},
  };
  if (!salt.empty()) key["salt"] = salt;
  return sha256_hex(key.dump());
}

json chat_request_body(const ModelSpec& model, std::span<const Message> messages) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  json body = {
      {"model", model.model_name},
      {"messages", std::move(msgs)},
      {"temperature", model.sampling.temperature},
  };
  if (model.sampling.max_tokens) body["max_tokens"] = *model.sampling.max_tokens;
  return body;
}

ChatResponse parse_chat_response(std::string_view body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ProviderError(ErrorCode::ProviderError, 200, "response is not a JSON object");
  }
  try {
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
      r.finish_reason = choice["finish_reason"].get<std::string>();
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      r.usage.prompt_tokens = u.value("prompt_tokens", 0);
      r.usage.completion_tokens = u.value("completion_tokens", 0);
      r.usage.total_tokens = u.value("total_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw ProviderError(ErrorCode::ProviderError, 200, std::string("malformed completion: ") + e.what());
  }
}

ChatResponse HttpTransport::send(const ModelSpec& model, std::span<const Message> messages,
                                 std::chrono::milliseconds timeout) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  const std::string& endpoint = model.endpoint;
  if (!std::regex_match(endpoint, m, kUrl)) {
    throw Error(ErrorCode::ConfigInvalid, "bad endpoint URL `" + endpoint + "`");
  }
  std::string path = m[2].matched ? m[2].str() : "";
  while (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  httplib::Client client(m[1].str());
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!model.api_key_env.empty()) {
    const char* key = std::getenv(model.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::ConfigInvalid, "environment variable " + model.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  const auto start = std::chrono::steady_clock::now();
  auto res = client.Post(path, headers, chat_request_body(model, messages).dump(), "application/json");
  const auto latency =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw ProviderError(ErrorCode::Timeout, 0, httplib::to_string(err));
    }
    throw ProviderError(ErrorCode::ProviderError, 0, httplib::to_string(err));
  }
  if (res->status == 429) throw ProviderError(ErrorCode::RateLimited, 429, res->body);
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError(ErrorCode::ProviderError, res->status, res->body);
  }
  auto parsed = parse_chat_response(res->body);
  parsed.latency = latency;
  return parsed;
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("response")) return std::nullopt;
  const auto& r = j["response"];
  ChatResponse out;
  out.text = r.value("text", "");
  out.finish_reason = r.value("finish_reason", "");
  out.latency = std::chrono::milliseconds(r.value("latency_ms", 0));
  if (r.contains("usage")) {
    out.usage.prompt_tokens = r["usage"].value("prompt_tokens", 0);
    out.usage.completion_tokens = r["usage"].value("completion_tokens", 0);
    out.usage.total_tokens = r["usage"].value("total_tokens", 0);
  }
  return out;
}

void ResponseCache::put(const std::string& key, const ModelSpec& model, std::span<const Message> messages,
                        const ChatResponse& response) const {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.text}});
  json j = {
      {"key", key},
      {"model_name", model.model_name},
      {"request", std::move(msgs)},
      {"response",
       {{"text", response.text},
        {"finish_reason", response.finish_reason},
        {"latency_ms", response.latency.count()},
        {"usage",
         {{"prompt_tokens", response.usage.prompt_tokens},
          {"completion_tokens", response.usage.completion_tokens},
          {"total_tokens", response.usage.total_tokens}}}}},
  };
  write_file_atomic(path_for(key), j.dump(2) + "\n");
}

class Gateway::Limiter {
public:
  explicit Limiter(std::size_t slots) : free_(slots) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t free_;
};

namespace {

bool retryable(const ProviderError& e) {
  switch (e.code()) {
    case ErrorCode::Timeout:
    case ErrorCode::RateLimited:
      return true;
    case ErrorCode::ProviderError:
      return e.status() == 0 || e.status() == 408 || e.status() >= 500;
    default:
      return false;
  }
}

}  // namespace

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
  if (options_.max_inflight == 0) options_.max_inflight = 1;
  if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

Gateway::~Gateway() = default;

void Gateway::register_transport(const std::string& model_id, std::shared_ptr<Transport> transport) {
  std::lock_guard lock(mu_);
  custom_[model_id] = std::move(transport);
}

Transport& Gateway::transport_for(const ModelSpec& model) {
  std::lock_guard lock(mu_);
  if (auto it = custom_.find(model.id); it != custom_.end()) return *it->second;
  if (model.provider != Provider::Mock) return http_;
  auto key = model.script.string();
  auto it = mocks_.find(key);
  if (it == mocks_.end()) it = mocks_.emplace(key, MockTransport::from_file(model.script)).first;
  return *it->second;
}

Gateway::Limiter& Gateway::limiter_for(const std::string& key) {
  std::lock_guard lock(mu_);
  auto& slot = limiters_[key];
  if (!slot) slot = std::make_unique<Limiter>(options_.max_inflight);
  return *slot;
}

GatewayStats Gateway::stats() const noexcept {
  return {transport_calls_.load(), cache_hits_.load()};
}

ChatExchange Gateway::complete(const ModelSpec& model, std::span<const Message> messages,
                               const RequestPolicy& policy) {
  if (messages.empty()) throw std::invalid_argument("complete: no messages");
  if (messages.front().role == Role::Assistant) {
    throw std::invalid_argument("complete: first message must be system or user");
  }

  ChatExchange ex;
  ex.request.assign(messages.begin(), messages.end());
  ex.model = model;
  ex.cache_key = cache_key(model, messages, policy.cache_salt);

  if (policy.use_cache && cache_) {
    if (auto hit = cache_->get(ex.cache_key)) {
      ++cache_hits_;
      ex.response = std::move(*hit);
      ex.from_cache = true;
      return ex;
    }
  }

  auto& transport = transport_for(model);
  auto& limiter = limiter_for(provider_key(model));
  auto delay = policy.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    limiter.acquire();
    try {
      ++transport_calls_;
      ++ex.attempts;
      ex.response = transport.send(model, messages, policy.timeout);
      limiter.release();
      break;
    } catch (const ProviderError& e) {
      limiter.release();
      const auto remaining = policy.timeout - ex.total_backoff;
      if (!retryable(e) || attempt >= policy.retries || remaining.count() <= 0) throw;
      const auto pause = std::min(delay, remaining);
      std::this_thread::sleep_for(pause);
      ex.total_backoff += pause;
      delay *= 2;
    } catch (...) {
      limiter.release();
      throw;
    }
  }

  if (policy.use_cache && cache_) cache_->put(ex.cache_key, model, messages, ex.response);
  return ex;
}

}  // namespace promptunit
