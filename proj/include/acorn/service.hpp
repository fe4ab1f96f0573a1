#pragma once

// Clients for the remote services the pipeline depends on: OpenAI-compatible
// chat completion (teacher, compressor, answer LLM) and a fill-mask endpoint.
// Both consult a content-addressed on-disk cache before touching the network,
// retry 429/5xx with exponential backoff and cap in-flight requests.

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "acorn/error.hpp"
#include "acorn/hashing.hpp"

namespace acorn {

struct ClientConfig {
  std::string base_url;
  std::string model;
  // Name of the environment variable holding the API key. Empty: no auth.
  std::string auth_env_var;
  double timeout_s = 60.0;
  int max_retries = 3;
  double backoff_base_s = 0.5;
  int max_concurrency = 4;

  void validate() const {
    if (max_retries < 0) throw BadInput("max_retries must be >= 0");
    if (!(timeout_s > 0)) throw BadInput("timeout_s must be > 0");
    if (max_concurrency < 1) throw BadInput("max_concurrency must be >= 1");
    if (backoff_base_s < 0) throw BadInput("backoff_base_s must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const ClientConfig& c) {
  j = nlohmann::json{{"base_url", c.base_url},       {"model", c.model},
                     {"auth_env_var", c.auth_env_var}, {"timeout_s", c.timeout_s},
                     {"max_retries", c.max_retries},   {"backoff_base_s", c.backoff_base_s},
                     {"max_concurrency", c.max_concurrency}};
}

struct ChatParams {
  double temperature = 0.0;
  int max_tokens = 160;
};

struct Completion {
  std::string text;
  bool from_cache = false;
  // Wall-clock of the successful network call; 0 for cache hits.
  double latency_s = 0.0;
  std::optional<long> prompt_tokens;
  std::optional<long> completion_tokens;
};

class ChatCompleter {
 public:
  virtual ~ChatCompleter() = default;
  virtual Completion complete(const std::string& prompt, const ChatParams& params) = 0;
  virtual std::string model() const = 0;
};

struct FillCandidate {
  std::string token_str;
  double score = 0.0;
};

class FillMasker {
 public:
  virtual ~FillMasker() = default;
  /// Ranked candidates for the single mask sentinel in `masked_text`.
  virtual std::vector<FillCandidate> fill(const std::string& masked_text) = 0;
  virtual std::string mask_token() const = 0;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string url;
  std::string body;
  std::vector<std::pair<std::string, std::string>> headers;
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;  // -1 when no response arrived (connect/read failure)
  std::string body;
};

using HttpTransport = std::function<HttpResponse(const HttpRequest&)>;

/// Splits "http://host:port/some/path" into ("http://host:port", "/some/path").
inline std::pair<std::string, std::string> split_url(const std::string& url) {
  std::string rest = url;
  std::string scheme = "http://";
  if (auto p = url.find("://"); p != std::string::npos) {
    scheme = url.substr(0, p + 3);
    rest = url.substr(p + 3);
  }
  const auto slash = rest.find('/');
  if (slash == std::string::npos) return {scheme + rest, "/"};
  return {scheme + rest.substr(0, slash), rest.substr(slash)};
}

inline HttpResponse httplib_transport(const HttpRequest& req) {
  const auto [origin, path] = split_url(req.url);
  httplib::Client cli(origin);
  const auto secs = static_cast<time_t>(req.timeout_s);
  const auto usecs = static_cast<time_t>((req.timeout_s - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  for (const auto& [k, v] : req.headers) headers.emplace(k, v);
  auto res = cli.Post(path, headers, req.body, "application/json");
  if (!res) return {-1, httplib::to_string(res.error())};
  return {res->status, res->body};
}

// ---------------------------------------------------------------------------
// Cache

/// Content-addressed response store: one JSON file per entry at
/// <dir>/<key[0:2]>/<key>.json holding {key, request, response, created_at}.
/// Safe for concurrent use across threads and processes; identical keys are
/// last-write-wins.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  static std::string key_for(std::string_view endpoint, const nlohmann::json& request) {
    // nlohmann::json keeps object keys sorted, so dump() is canonical.
    nlohmann::json material{{"endpoint", endpoint}, {"request", request}};
    return sha256_hex(material.dump());
  }

  std::optional<nlohmann::json> load(const std::string& key) const {
    std::ifstream in(path_for(key));
    if (!in) return std::nullopt;
    try {
      auto entry = nlohmann::json::parse(in);
      if (entry.value("key", std::string()) != key || !entry.contains("response")) return std::nullopt;
      return entry.at("response");
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

  void store(const std::string& key, const nlohmann::json& request, const nlohmann::json& response) {
    const auto path = path_for(key);
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cache: cannot create " + path.parent_path().string() + ": " + ec.message());

    nlohmann::ordered_json entry;
    entry["key"] = key;
    entry["request"] = request;
    entry["response"] = response;
    entry["created_at"] = utc_timestamp();

    std::ostringstream tmp_name;
    tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id() << '.'
             << tmp_counter_.fetch_add(1);
    const auto tmp = path.parent_path() / tmp_name.str();
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw IoError("cache: cannot write " + tmp.string());
      out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cache: cannot publish " + path.string() + ": " + ec.message());
  }

 private:
  std::filesystem::path path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
  }

  static std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
  std::atomic<unsigned long> tmp_counter_{0};
};

// ---------------------------------------------------------------------------
// Concurrency cap

class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(int capacity) : available_(capacity) {}

  class Permit {
   public:
    explicit Permit(ConcurrencyLimiter* owner) : owner_(owner) {}
    Permit(Permit&& other) noexcept : owner_(std::exchange(other.owner_, nullptr)) {}
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;
    Permit& operator=(Permit&&) = delete;
    ~Permit() {
      if (owner_) owner_->release();
    }

   private:
    ConcurrencyLimiter* owner_;
  };

  Permit acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return available_ > 0; });
    --available_;
    return Permit(this);
  }

 private:
  void release() {
    {
      std::lock_guard lock(mu_);
      ++available_;
    }
    cv_.notify_one();
  }

  std::mutex mu_;
  std::condition_variable cv_;
  int available_;
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> auth_headers(const ClientConfig& cfg,
                                                                     const std::string& what) {
  std::vector<std::pair<std::string, std::string>> headers;
  if (cfg.auth_env_var.empty()) return headers;
  const char* key = std::getenv(cfg.auth_env_var.c_str());
  if (!key || !*key) {
    throw AuthError(what + ": environment variable " + cfg.auth_env_var + " is not set");
  }
  headers.emplace_back("Authorization", std::string("Bearer ") + key);
  return headers;
}

inline std::string join_url(std::string base, std::string_view suffix) {
  while (!base.empty() && base.back() == '/') base.pop_back();
  return base + std::string(suffix);
}

/// POSTs with retries on 429, 5xx and transport failures. Each attempt holds
/// a limiter permit only while the request is in flight.
inline HttpResponse post_with_retries(const ClientConfig& cfg, const HttpTransport& transport,
                                      ConcurrencyLimiter& limiter, std::atomic<std::size_t>& calls,
                                      const HttpRequest& req, const std::string& what,
                                      double& latency_s) {
  for (int attempt = 1;; ++attempt) {
    HttpResponse res;
    {
      auto permit = limiter.acquire();
      ++calls;
      const auto t0 = std::chrono::steady_clock::now();
      res = transport(req);
      latency_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (res.status >= 200 && res.status < 300) return res;
    if (res.status == 401 || res.status == 403) {
      throw AuthError(what + ": credentials rejected (status " + std::to_string(res.status) + ")");
    }
    const bool retryable = res.status == 429 || res.status >= 500 || res.status < 0;
    if (!retryable || attempt > cfg.max_retries) {
      throw ServiceError(what + ": " + res.body.substr(0, 200), res.status, attempt);
    }
    const double delay = cfg.backoff_base_s * std::pow(2.0, attempt - 1);
    std::this_thread::sleep_for(std::chrono::duration<double>(delay));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Chat completion

/// OpenAI-compatible chat client: POST {base_url}/v1/chat/completions.
class ChatClient final : public ChatCompleter {
 public:
  ChatClient(ClientConfig cfg, std::shared_ptr<ResponseCache> cache = nullptr,
             HttpTransport transport = httplib_transport)
      : cfg_(std::move(cfg)),
        cache_(std::move(cache)),
        transport_(std::move(transport)),
        limiter_((cfg_.validate(), cfg_.max_concurrency)) {}

  std::string model() const override { return cfg_.model; }
  const ClientConfig& config() const { return cfg_; }
  std::size_t network_calls() const { return calls_.load(); }

  static nlohmann::json request_body(const std::string& model, const std::string& prompt,
                                     const ChatParams& params) {
    return nlohmann::json{
        {"model", model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", params.temperature},
        {"max_tokens", params.max_tokens}};
  }

  Completion complete(const std::string& prompt, const ChatParams& params) override {
    const auto body = request_body(cfg_.model, prompt, params);
    const auto key = ResponseCache::key_for("chat", body);
    if (cache_) {
      if (auto cached = cache_->load(key)) {
        auto c = parse(*cached);
        c.from_cache = true;
        return c;
      }
    }

    HttpRequest req;
    req.url = detail::join_url(cfg_.base_url, "/v1/chat/completions");
    req.body = body.dump();
    req.headers = detail::auth_headers(cfg_, "chat " + cfg_.model);
    req.timeout_s = cfg_.timeout_s;

    double latency = 0.0;
    const auto res = detail::post_with_retries(cfg_, transport_, limiter_, calls_, req,
                                               "chat " + cfg_.model, latency);
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse("chat " + cfg_.model + ": response is not JSON: " + e.what());
    }
    auto c = parse(response);
    c.latency_s = latency;
    // Empty completions are not cached so a retry reaches the service again.
    if (cache_ && !c.text.empty()) cache_->store(key, body, response);
    return c;
  }

 private:
  Completion parse(const nlohmann::json& response) const {
    Completion c;
    try {
      c.text = response.at("choices").at(0).at("message").at("content").get<std::string>();
      if (auto u = response.find("usage"); u != response.end() && u->is_object()) {
        if (u->contains("prompt_tokens")) c.prompt_tokens = u->at("prompt_tokens").get<long>();
        if (u->contains("completion_tokens")) {
          c.completion_tokens = u->at("completion_tokens").get<long>();
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse("chat " + cfg_.model + ": unexpected response shape: " + e.what());
    }
    return c;
  }

  ClientConfig cfg_;
  std::shared_ptr<ResponseCache> cache_;
  HttpTransport transport_;
  ConcurrencyLimiter limiter_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Fill-mask

/// POST {base_url} with {"inputs": text} -> [{"token_str", "score"}, ...].
class FillMaskClient final : public FillMasker {
 public:
  FillMaskClient(ClientConfig cfg, std::string mask_token = "<mask>",
                 std::shared_ptr<ResponseCache> cache = nullptr,
                 HttpTransport transport = httplib_transport)
      : cfg_(std::move(cfg)),
        mask_token_(std::move(mask_token)),
        cache_(std::move(cache)),
        transport_(std::move(transport)),
        limiter_((cfg_.validate(), cfg_.max_concurrency)) {
    if (mask_token_.empty()) throw BadInput("mask token must be non-empty");
  }

  std::string mask_token() const override { return mask_token_; }
  std::size_t network_calls() const { return calls_.load(); }

  std::vector<FillCandidate> fill(const std::string& masked_text) override {
    std::size_t sentinels = 0;
    for (auto p = masked_text.find(mask_token_); p != std::string::npos;
         p = masked_text.find(mask_token_, p + mask_token_.size())) {
      ++sentinels;
    }
    if (sentinels != 1) {
      throw BadInput("fill-mask input must contain exactly one " + mask_token_ + " (found " +
                     std::to_string(sentinels) + ")");
    }

    const nlohmann::json body{{"inputs", masked_text}};
    const auto key = ResponseCache::key_for("fill-mask", {{"model", cfg_.model}, {"body", body}});
    if (cache_) {
      if (auto cached = cache_->load(key)) return parse(*cached);
    }

    HttpRequest req;
    req.url = cfg_.base_url;
    req.body = body.dump();
    req.headers = detail::auth_headers(cfg_, "fill-mask");
    req.timeout_s = cfg_.timeout_s;
    double latency = 0.0;
    const auto res =
        detail::post_with_retries(cfg_, transport_, limiter_, calls_, req, "fill-mask", latency);
    nlohmann::json response;
    try {
      response = nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string("fill-mask: response is not JSON: ") + e.what());
    }
    auto candidates = parse(response);
    if (cache_) cache_->store(key, body, response);
    return candidates;
  }

 private:
  static std::vector<FillCandidate> parse(const nlohmann::json& response) {
    if (!response.is_array()) throw MalformedResponse("fill-mask: expected a JSON array");
    std::vector<FillCandidate> out;
    try {
      for (const auto& item : response) {
        out.push_back({item.at("token_str").get<std::string>(), item.at("score").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string("fill-mask: bad candidate: ") + e.what());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const FillCandidate& a, const FillCandidate& b) { return a.score > b.score; });
    return out;
  }

  ClientConfig cfg_;
  std::string mask_token_;
  std::shared_ptr<ResponseCache> cache_;
  HttpTransport transport_;
  ConcurrencyLimiter limiter_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace acorn
