#pragma once

// Rewriters: the remote chat-completion client, the offline mock and
// identity rewriters, and the persistent response cache that fronts them.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "redit/error.hpp"
#include "redit/hash.hpp"
#include "redit/random.hpp"
#include "redit/textio.hpp"
#include "redit/unicode.hpp"

namespace redit {

inline constexpr double kDeterministicTemperature = 0.0;
inline constexpr double kSamplingTemperature = 0.7;

struct CompletionRequest {
  std::string model_name;
  std::string prompt_text;
  double temperature = kDeterministicTemperature;
  std::uint32_t sample_index = 0;
  std::uint32_t max_output_tokens = 1024;
};

struct CompletionResponse {
  std::string text;
  std::string provider;
  bool cached = false;
  std::int64_t latency_ms = 0;
};

/// Anything that turns a composed prompt into rewritten text.
class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

/// Stable content hash of every request field that affects the reply.
inline std::string cache_key(const CompletionRequest& r) {
  return FingerprintBuilder()
      .add("model_name", r.model_name)
      .add("prompt_text", r.prompt_text)
      .add("temperature", r.temperature)
      .add("sample_index", static_cast<long long>(r.sample_index))
      .add("max_output_tokens", static_cast<long long>(r.max_output_tokens))
      .hex();
}

/// Splits a composed prompt at its first newline into (instruction, input).
inline std::pair<std::string_view, std::string_view> split_composed(std::string_view prompt_text) {
  const auto nl = prompt_text.find('\n');
  if (nl == std::string_view::npos) return {prompt_text, std::string_view{}};
  return {prompt_text.substr(0, nl), prompt_text.substr(nl + 1)};
}

// ---------------------------------------------------------------------------
// Reply post-processing

struct WrapperOptions {
  bool enabled = true;
  /// A first line matching any of these (case-insensitive, whole line) is dropped.
  std::vector<std::string> boilerplate_patterns = {
      R"(\s*(sure|certainly|of course|okay|ok|absolutely|here|below)\b.*:\s*)",
      R"(\s*(the\s+)?(revised|rewritten|polished|refined|rephrased|updated|improved)(\s+(version|text|paragraph))?\s*:\s*)",
  };
};

namespace detail {

inline std::string trim(std::string_view s) {
  const std::u32string cps = unicode::decode(s);
  std::size_t b = 0, e = cps.size();
  while (b < e && unicode::is_space(cps[b])) ++b;
  while (e > b && unicode::is_space(cps[e - 1])) --e;
  if (b == 0 && e == cps.size()) return std::string(s);
  return unicode::encode(std::u32string_view(cps).substr(b, e - b));
}

inline bool strip_once(std::string& text, const std::vector<std::regex>& patterns) {
  std::string t = trim(text);

  // Code fence wrapping the whole reply.
  if (t.size() >= 6 && t.rfind("```", 0) == 0 && t.size() >= 3 && t.compare(t.size() - 3, 3, "```") == 0) {
    const auto nl = t.find('\n');
    if (nl != std::string::npos && nl < t.size() - 3) {
      text = trim(std::string_view(t).substr(nl + 1, t.size() - 3 - (nl + 1)));
      return true;
    }
  }

  // Matching quotes around the whole reply.
  static const std::pair<std::string_view, std::string_view> kQuotes[] = {
      {"\"", "\""}, {"'", "'"}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"\xE2\x80\x98", "\xE2\x80\x99"}};
  for (const auto& [open, close] : kQuotes) {
    if (t.size() >= open.size() + close.size() + 1 && t.compare(0, open.size(), open) == 0 &&
        t.compare(t.size() - close.size(), close.size(), close) == 0) {
      const std::string inner = t.substr(open.size(), t.size() - open.size() - close.size());
      // Only strip if the quote characters do not occur inside; otherwise it is quoted speech.
      if (inner.find(open) == std::string::npos && inner.find(close) == std::string::npos) {
        text = trim(inner);
        return true;
      }
    }
  }

  // Boilerplate opener line, only when something follows it.
  const auto nl = t.find('\n');
  if (nl != std::string::npos) {
    const std::string first = t.substr(0, nl);
    for (const auto& re : patterns) {
      if (std::regex_match(first, re)) {
        const std::string rest = trim(std::string_view(t).substr(nl + 1));
        if (!rest.empty()) {
          text = rest;
          return true;
        }
      }
    }
  }

  const bool changed = t != text;
  text = std::move(t);
  return changed;
}

}  // namespace detail

/// Removes chat boilerplate: a leading "Sure, here is ...:" style line,
/// code fences and quotes around the whole reply, and surrounding whitespace.
/// Applied to a fixed point, so it is idempotent.
inline std::string strip_wrapper(std::string_view raw, const WrapperOptions& options = {}) {
  if (!options.enabled) return std::string(raw);
  std::vector<std::regex> patterns;
  patterns.reserve(options.boilerplate_patterns.size());
  for (const auto& p : options.boilerplate_patterns) {
    patterns.emplace_back(p, std::regex::ECMAScript | std::regex::icase);
  }
  std::string text(raw);
  for (int guard = 0; guard < 1000 && detail::strip_once(text, patterns); ++guard) {
  }
  return text;
}

// ---------------------------------------------------------------------------
// Offline rewriters

/// Returns the input part of the prompt unchanged.
class IdentityRewriter final : public Rewriter {
 public:
  CompletionResponse complete(const CompletionRequest& request) override {
    return {std::string(split_composed(request.prompt_text).second), "identity", false, 0};
  }
};

/// An evasion prompt under the mock: rewriting marked machine text with this
/// instruction swaps the machine marker for `marker`, and text carrying
/// `marker` is afterwards edited at `edit_rate`.
struct MockEvasionRule {
  std::string instruction;
  std::string marker;
  double edit_rate = 0.5;
};

struct MockRewriterConfig {
  double edit_rate_human = 0.5;
  double edit_rate_machine = 0.1;
  std::uint64_t seed = 0;
  std::string machine_marker = "zmachinez";
  std::vector<MockEvasionRule> evasion;
  /// Instructions the mock answers by returning the input unchanged.
  std::vector<std::string> identity_instructions;

  void validate() const {
    auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!in_unit(edit_rate_human) || !in_unit(edit_rate_machine)) {
      throw Error(ErrorCode::kInvalidArgument, "mock edit rates must lie in [0,1]");
    }
    if (!(edit_rate_human > edit_rate_machine)) {
      throw Error(ErrorCode::kInvalidArgument, "mock requires edit_rate_human > edit_rate_machine");
    }
    if (machine_marker.empty()) throw Error(ErrorCode::kInvalidArgument, "mock machine_marker is empty");
    for (const auto& r : evasion) {
      if (r.marker.empty() || r.marker == machine_marker || !in_unit(r.edit_rate)) {
        throw Error(ErrorCode::kInvalidArgument, "invalid mock evasion rule for '" + r.instruction + "'");
      }
    }
  }
};

namespace detail {

struct Span {
  std::size_t begin;
  std::size_t end;
};

/// Byte spans of the whitespace-separated tokens.
inline std::vector<Span> token_spans(std::string_view text) {
  std::vector<Span> spans;
  const auto cps = unicode::decode(text);
  // Walk bytes and scalars in lockstep.
  std::size_t byte = 0;
  bool in_token = false;
  std::size_t start = 0;
  auto scalar_len = [&](std::size_t i) -> std::size_t {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    return std::min(n, text.size() - i);
  };
  for (std::size_t k = 0; k < cps.size() && byte < text.size(); ++k) {
    const std::size_t len = scalar_len(byte);
    const bool space = cps[k] != unicode::kReplacement && unicode::is_space(cps[k]);
    if (!space && !in_token) {
      in_token = true;
      start = byte;
    } else if (space && in_token) {
      in_token = false;
      spans.push_back({start, byte});
    }
    byte += len;
  }
  if (in_token) spans.push_back({start, text.size()});
  return spans;
}

}  // namespace detail

/// Deterministic stand-in for a rewriting model: replaces a fixed fraction of
/// the input's tokens with synthetic ones. Marked machine text is edited at
/// the lower machine rate. Marker tokens themselves are never replaced.
class MockRewriter final : public Rewriter {
 public:
  explicit MockRewriter(MockRewriterConfig config) : config_(std::move(config)) { config_.validate(); }

  const MockRewriterConfig& config() const noexcept { return config_; }

  CompletionResponse complete(const CompletionRequest& request) override {
    const auto [instruction, input] = split_composed(request.prompt_text);
    std::string text(input);

    for (const auto& id : config_.identity_instructions) {
      if (id == instruction) return {std::move(text), "mock", false, 0};
    }

    auto spans = detail::token_spans(text);
    auto token = [&](const detail::Span& s) { return std::string_view(text).substr(s.begin, s.end - s.begin); };

    // Evasion: swap the machine marker for the rule's marker.
    const MockEvasionRule* evading = nullptr;
    for (const auto& rule : config_.evasion) {
      if (rule.instruction == instruction) evading = &rule;
    }
    if (evading && contains_token(text, spans, config_.machine_marker)) {
      std::string swapped;
      std::size_t pos = 0;
      for (const auto& s : spans) {
        if (token(s) == config_.machine_marker) {
          swapped.append(text, pos, s.begin - pos);
          swapped += evading->marker;
          pos = s.end;
        }
      }
      swapped.append(text, pos, std::string::npos);
      text = std::move(swapped);
      spans = detail::token_spans(text);
    }

    const double rate = edit_rate_for(text, spans);
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      if (!is_marker(token(spans[i]))) eligible.push_back(i);
    }
    const auto edits = static_cast<std::size_t>(std::llround(rate * static_cast<double>(eligible.size())));

    std::mt19937_64 rng(sha256_u64(FingerprintBuilder()
                                       .add("seed", std::to_string(config_.seed))
                                       .add("prompt", request.prompt_text)
                                       .add("sample", static_cast<long long>(request.sample_index))
                                       .canonical()));
    // Partial Fisher-Yates picks `edits` distinct token positions.
    for (std::size_t i = 0; i < edits; ++i) {
      const auto j = i + uniform_below(rng, eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
    }
    std::vector<std::size_t> chosen(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(edits));
    std::sort(chosen.begin(), chosen.end());

    std::string out;
    out.reserve(text.size() + edits * 4);
    std::size_t pos = 0;
    for (std::size_t idx : chosen) {
      const auto& s = spans[idx];
      out.append(text, pos, s.begin - pos);
      std::string replacement;
      do {
        replacement = synthetic_token(rng);
      } while (replacement == token(s));
      out += replacement;
      pos = s.end;
    }
    out.append(text, pos, std::string::npos);
    return {std::move(out), "mock", false, 0};
  }

 private:
  static bool contains_token(std::string_view text, const std::vector<detail::Span>& spans, std::string_view tok) {
    return std::any_of(spans.begin(), spans.end(),
                       [&](const detail::Span& s) { return text.substr(s.begin, s.end - s.begin) == tok; });
  }

  bool is_marker(std::string_view tok) const {
    if (tok == config_.machine_marker) return true;
    return std::any_of(config_.evasion.begin(), config_.evasion.end(),
                       [&](const MockEvasionRule& r) { return r.marker == tok; });
  }

  double edit_rate_for(std::string_view text, const std::vector<detail::Span>& spans) const {
    for (const auto& rule : config_.evasion) {
      if (contains_token(text, spans, rule.marker)) return rule.edit_rate;
    }
    if (contains_token(text, spans, config_.machine_marker)) return config_.edit_rate_machine;
    return config_.edit_rate_human;
  }

  static std::string synthetic_token(std::mt19937_64& rng) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string t = "q";
    std::uint64_t v = rng();
    for (int i = 0; i < 7; ++i, v >>= 4) t.push_back(kHex[v & 0xF]);
    return t;
  }

  MockRewriterConfig config_;
};

// ---------------------------------------------------------------------------
// Remote endpoint

struct EndpointConfig {
  std::string base_url;
  std::string api_key;
  std::string model_name;

  bool complete() const { return !base_url.empty() && !api_key.empty() && !model_name.empty(); }

  /// Reads REDIT_BASE_URL, REDIT_API_KEY and REDIT_MODEL.
  static EndpointConfig from_env() {
    auto get = [](const char* name) -> std::string {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    return {get("REDIT_BASE_URL"), get("REDIT_API_KEY"), get("REDIT_MODEL")};
  }
};

struct HttpResult {
  int status = 0;  // 0 = no HTTP response (connection failure, timeout)
  std::string body;
  std::string error;
};

/// POST of a JSON body; implementations must be callable concurrently.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post_json(const std::string& url, const std::string& bearer_token, const std::string& body) = 0;
};

struct RetryPolicy {
  int max_attempts = 4;
  std::int64_t base_delay_ms = 500;
  std::int64_t max_delay_ms = 8000;
};

/// Chat-completion client for OpenAI-compatible endpoints.
class ChatClient final : public Rewriter {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  ChatClient(std::shared_ptr<Transport> transport, EndpointConfig endpoint, RetryPolicy retry = {},
             WrapperOptions wrapper = {}, int max_in_flight = 4,
             Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
      : transport_(std::move(transport)),
        endpoint_(std::move(endpoint)),
        retry_(retry),
        wrapper_(std::move(wrapper)),
        slots_(std::clamp(max_in_flight, 1, 64)),
        sleeper_(std::move(sleeper)) {
    if (!transport_) throw Error(ErrorCode::kConfigError, "no transport");
    if (endpoint_.base_url.empty()) throw Error(ErrorCode::kConfigError, "endpoint base URL not set (REDIT_BASE_URL)");
    if (endpoint_.api_key.empty()) throw Error(ErrorCode::kConfigError, "API key not set (REDIT_API_KEY)");
    if (retry_.max_attempts < 1) retry_.max_attempts = 1;
  }

  std::int64_t attempts() const noexcept { return attempts_.load(); }

  static std::string request_body(const CompletionRequest& r) {
    nlohmann::ordered_json body;
    body["model"] = r.model_name;
    body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", r.prompt_text}}});
    body["temperature"] = r.temperature;
    body["max_tokens"] = r.max_output_tokens;
    return body.dump();
  }

  /// First choice's message content; throws TransportError on malformed replies.
  static std::string parse_reply(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kTransportError, std::string("malformed completion reply: ") + e.what());
    }
  }

  CompletionResponse complete(const CompletionRequest& request) override {
    if (request.prompt_text.empty()) throw Error(ErrorCode::kInvalidArgument, "empty prompt");
    CompletionRequest r = request;
    if (r.model_name.empty()) r.model_name = endpoint_.model_name;
    const std::string body = request_body(r);
    const std::string url = endpoint_.base_url + (endpoint_.base_url.ends_with('/') ? "" : "/") + "chat/completions";

    const auto started = std::chrono::steady_clock::now();
    ErrorCode last_code = ErrorCode::kTransportError;
    std::string last_message;
    for (int attempt = 0; attempt < retry_.max_attempts; ++attempt) {
      if (attempt > 0) {
        const auto delay = std::min(retry_.max_delay_ms, retry_.base_delay_ms << std::min(attempt - 1, 20));
        sleeper_(std::chrono::milliseconds(delay));
      }
      HttpResult res;
      {
        slots_.acquire();
        struct Release {
          std::counting_semaphore<64>& s;
          ~Release() { s.release(); }
        } release{slots_};
        ++attempts_;
        res = transport_->post_json(url, endpoint_.api_key, body);
      }
      if (res.status == 200) {
        std::string text = strip_wrapper(parse_reply(res.body), wrapper_);
        if (is_blank(text)) throw Error(ErrorCode::kEmptyCompletion, "provider returned blank text");
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
        return {std::move(text), "remote:" + r.model_name, false, ms.count()};
      }
      if (res.status == 401 || res.status == 403) {
        throw Error(ErrorCode::kAuthError, "HTTP " + std::to_string(res.status) + " " + res.body);
      }
      const bool retryable = res.status == 0 || res.status == 408 || res.status == 429 || res.status >= 500;
      last_code = res.status == 429 ? ErrorCode::kRateLimited : ErrorCode::kTransportError;
      last_message = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status) + " " + res.body;
      if (!retryable) break;
      spdlog::debug("completion attempt {} failed: {}", attempt + 1, last_message);
    }
    throw Error(last_code, last_message);
  }

 private:
  std::shared_ptr<Transport> transport_;
  EndpointConfig endpoint_;
  RetryPolicy retry_;
  WrapperOptions wrapper_;
  std::counting_semaphore<64> slots_;
  Sleeper sleeper_;
  std::atomic<std::int64_t> attempts_{0};
};

// ---------------------------------------------------------------------------
// Response cache

struct CacheEntry {
  std::string key;
  CompletionRequest request;
  std::string text;
  std::string provider;
  std::int64_t timestamp = 0;
};

/// Line-delimited, append-only cache file. Later lines for a key win.
/// Safe for concurrent use within one process.
class ResponseCache {
 public:
  /// In-memory only.
  ResponseCache() = default;

  explicit ResponseCache(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    // A torn final line must not swallow the next appended record.
    in.seekg(0, std::ios::end);
    if (in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      needs_newline_ = in.get() != '\n';
    }
    in.clear();
    in.seekg(0);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (is_blank(line)) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        CacheEntry e;
        e.key = j.at("key").get<std::string>();
        e.request.model_name = j.at("model_name").get<std::string>();
        e.request.prompt_text = j.at("prompt_text").get<std::string>();
        e.request.temperature = j.at("temperature").get<double>();
        e.request.sample_index = j.at("sample_index").get<std::uint32_t>();
        e.request.max_output_tokens = j.at("max_output_tokens").get<std::uint32_t>();
        e.text = j.at("response").get<std::string>();
        e.provider = j.value("provider", "");
        e.timestamp = j.value("timestamp", std::int64_t{0});
        entries_[e.key] = std::move(e);
      } catch (const nlohmann::json::exception&) {
        // A torn final line from an interrupted run is expected; skip it.
        spdlog::warn("cache {}:{}: unreadable record skipped", path_, lineno);
      }
    }
  }

  std::optional<CacheEntry> lookup(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void store(const CompletionRequest& request, const CompletionResponse& response) {
    CacheEntry e;
    e.key = cache_key(request);
    e.request = request;
    e.text = response.text;
    e.provider = response.provider;
    e.timestamp = static_cast<std::int64_t>(std::time(nullptr));

    nlohmann::ordered_json j;
    j["key"] = e.key;
    j["model_name"] = request.model_name;
    j["prompt_text"] = request.prompt_text;
    j["temperature"] = request.temperature;
    j["sample_index"] = request.sample_index;
    j["max_output_tokens"] = request.max_output_tokens;
    j["response"] = e.text;
    j["provider"] = e.provider;
    j["timestamp"] = e.timestamp;

    std::lock_guard lock(mu_);
    if (!path_.empty()) {
      std::ofstream out(path_, std::ios::binary | std::ios::app);
      if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot append to cache '" + path_ + "'");
      if (needs_newline_) out << '\n';
      needs_newline_ = false;
      out << j.dump() << '\n';
      out.flush();
    }
    entries_[e.key] = std::move(e);
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  std::vector<CacheEntry> entries() const {
    std::lock_guard lock(mu_);
    std::vector<CacheEntry> out;
    out.reserve(entries_.size());
    for (const auto& [k, e] : entries_) out.push_back(e);
    return out;
  }

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  bool needs_newline_ = false;
  mutable std::mutex mu_;
  std::map<std::string, CacheEntry> entries_;
};

/// Consults the cache first and writes through on success.
class CachingRewriter final : public Rewriter {
 public:
  CachingRewriter(Rewriter& inner, ResponseCache& cache) : inner_(inner), cache_(cache) {}

  CompletionResponse complete(const CompletionRequest& request) override {
    const std::string key = cache_key(request);
    if (auto hit = cache_.lookup(key)) {
      ++hits_;
      return {hit->text, hit->provider, true, 0};
    }
    ++misses_;
    CompletionResponse response = inner_.complete(request);
    cache_.store(request, response);
    return response;
  }

  std::int64_t hits() const noexcept { return hits_.load(); }
  std::int64_t misses() const noexcept { return misses_.load(); }

 private:
  Rewriter& inner_;
  ResponseCache& cache_;
  std::atomic<std::int64_t> hits_{0};
  std::atomic<std::int64_t> misses_{0};
};

}  // namespace redit
