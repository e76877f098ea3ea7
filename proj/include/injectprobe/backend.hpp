#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "injectprobe/attack.hpp"
#include "injectprobe/prompt.hpp"

namespace injectprobe {

/// Name of the environment variable holding the bearer credential for
/// http_api backends. Its value is never logged.
inline constexpr const char* kApiKeyEnvVar = "INJECTPROBE_API_KEY";

enum class BackendKind { http_api, scripted_mock, replay };
enum class Vulnerability { vulnerable, hardened };

std::string_view to_string(BackendKind kind);
std::string_view to_string(Vulnerability v);
BackendKind parse_backend_kind(std::string_view name);
Vulnerability parse_vulnerability(std::string_view name);

/// Behavior profile of the scripted mock model.
///
/// vulnerable: follows an injected instruction found in the user segment —
/// returns a quoted payload verbatim when the trigger pattern is present, or
/// leaks the instruction text when asked to print/repeat the instructions.
/// hardened: always treats the user segment as data and echoes it through
/// task_echo, no matter what it contains.
struct MockProfile {
  Vulnerability vulnerability = Vulnerability::vulnerable;
  std::string trigger_pattern = "ignore";  // matched case-insensitively
  /// Transformation applied to input treated as data; identity when empty.
  std::function<std::string(const std::string&)> task_echo;
};

/// One adapter layer maps the generic completion call onto a vendor's
/// request/response JSON shape.
struct HttpAdapterConfig {
  std::string endpoint;          // e.g. http://host:port/v1/completions
  std::string model_identifier;  // sent as "model" when nonempty
  nlohmann::json request_template_fields = nlohmann::json::object();
  std::string response_text_path = "choices.0.text";  // dotted path
  int max_attempts = 3;
  int initial_backoff_ms = 250;
  double requests_per_minute = 60.0;
  double burst = 10.0;
  int timeout_ms = 30000;
};

HttpAdapterConfig load_http_adapter_config(const std::string& json_text);

struct BackendDescriptor {
  std::string name;
  BackendKind kind = BackendKind::scripted_mock;
  std::optional<HttpAdapterConfig> http;      // http_api
  std::optional<MockProfile> mock_profile;    // scripted_mock
  std::optional<std::string> cache_path;      // replay
};

/// Throws SchemaError when fields required by the descriptor's kind are
/// missing.
void validate_descriptor(const BackendDescriptor& descriptor);

struct Completion {
  std::string case_id;
  std::string backend_name;
  std::string text;
  std::uint64_t latency_ms = 0;
  bool from_cache = false;
};

/// Deterministic mock-model rule; see MockProfile.
std::string mock_rule(const MockProfile& profile, const RenderedPrompt& prompt);

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Transport seam for the HTTP backend; tests substitute instrumented
/// implementations to count or fail requests.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post(const std::string& url,
                            const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, int timeout_ms) = 0;
};

std::shared_ptr<HttpTransport> default_http_transport();

/// Blocking token-bucket rate limiter shared by all workers of one backend.
class TokenBucket {
 public:
  /// tokens_per_minute <= 0 disables limiting.
  TokenBucket(double tokens_per_minute, double burst);
  void acquire();

 private:
  double capacity_;
  double tokens_;
  double per_ms_;
  std::chrono::steady_clock::time_point last_refill_;
  std::mutex mu_;
};

/// JSONL-file-backed completion store keyed by case_id. One object per line
/// with keys {case_id, backend_name, text, latency_ms}; later lines win on
/// duplicate keys. Reads are shared; writes are serialized internally.
class ReplayCache {
 public:
  /// Binds to `path`, loading existing entries when the file is present.
  /// Throws StorageError on unreadable/malformed content.
  explicit ReplayCache(std::string path);

  std::optional<Completion> lookup(const std::string& case_id) const;

  /// Idempotent for identical payloads; overwrites on differing payloads
  /// with a warning on stderr. Throws StorageError on I/O failure.
  void record(const std::string& case_id, const Completion& completion);

  std::size_t size() const;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::map<std::string, Completion> entries_;
  mutable std::mutex mu_;
};

/// One-shot convenience over ReplayCache for a single record.
void record_completion(const std::string& cache_path, const std::string& case_id,
                       const Completion& completion);

/// Uniform completion interface over the three backend kinds.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual Completion complete(const RenderedPrompt& prompt,
                              const ModelParams& params) = 0;
  const std::string& name() const { return name_; }

 protected:
  explicit CompletionBackend(std::string name) : name_(std::move(name)) {}
  std::string name_;
};

/// Builds the backend for a descriptor. `transport` overrides the HTTP
/// transport (http_api only); mock and replay backends never perform network
/// operations.
std::unique_ptr<CompletionBackend> make_backend(
    const BackendDescriptor& descriptor,
    std::shared_ptr<HttpTransport> transport = nullptr);

/// Convenience: build the backend and run one completion.
Completion complete(const BackendDescriptor& descriptor,
                    const RenderedPrompt& prompt, const ModelParams& params);

namespace detail {
/// The untrusted part of a rendered prompt: the content between the tags for
/// tagged prompts, the spliced user input for raw ones.
std::string user_segment(const RenderedPrompt& prompt);
/// First single- or double-quoted span in `text`, if any (nonempty).
std::optional<std::string> extract_quoted_payload(std::string_view text);
bool contains_ci(std::string_view haystack, std::string_view needle);
}  // namespace detail

}  // namespace injectprobe
