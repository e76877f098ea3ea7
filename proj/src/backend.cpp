#include "injectprobe/backend.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "injectprobe/errors.hpp"
#include "json_detail.hpp"

namespace injectprobe {

namespace {

using detail::json;

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

json completion_to_json(const std::string& case_id, const Completion& c) {
  json obj;
  obj["case_id"] = case_id;
  obj["backend_name"] = c.backend_name;
  obj["text"] = c.text;
  obj["latency_ms"] = c.latency_ms;
  return obj;
}

}  // namespace

namespace detail {

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string user_segment(const RenderedPrompt& prompt) {
  if (prompt.delimiter_mode == DelimiterMode::tagged) {
    try {
      return extract_user_input(prompt);
    } catch (const MalformedDelimiters&) {
      // Fall through to the recorded splice.
    }
  }
  return prompt.user_input;
}

std::optional<std::string> extract_quoted_payload(std::string_view text) {
  const std::size_t open = text.find_first_of("'\"");
  if (open == std::string_view::npos) return std::nullopt;
  const char quote = text[open];
  const std::size_t close = text.find(quote, open + 1);
  if (close == std::string_view::npos || close == open + 1) return std::nullopt;
  return std::string(text.substr(open + 1, close - open - 1));
}

}  // namespace detail

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::http_api: return "http_api";
    case BackendKind::scripted_mock: return "scripted_mock";
    case BackendKind::replay: return "replay";
  }
  return "scripted_mock";
}

std::string_view to_string(Vulnerability v) {
  return v == Vulnerability::vulnerable ? "vulnerable" : "hardened";
}

BackendKind parse_backend_kind(std::string_view name) {
  if (name == "http_api") return BackendKind::http_api;
  if (name == "scripted_mock") return BackendKind::scripted_mock;
  if (name == "replay") return BackendKind::replay;
  throw SchemaError("kind", "unknown backend kind '" + std::string(name) + "'");
}

Vulnerability parse_vulnerability(std::string_view name) {
  if (name == "vulnerable") return Vulnerability::vulnerable;
  if (name == "hardened") return Vulnerability::hardened;
  throw SchemaError("vulnerability",
                    "unknown vulnerability '" + std::string(name) + "'");
}

void validate_descriptor(const BackendDescriptor& descriptor) {
  if (descriptor.name.empty()) {
    throw SchemaError("backend.name", "backend name must be nonempty");
  }
  switch (descriptor.kind) {
    case BackendKind::http_api:
      if (!descriptor.http || descriptor.http->endpoint.empty()) {
        throw SchemaError("backend.http",
                          "http_api backends require an adapter config with an "
                          "endpoint");
      }
      break;
    case BackendKind::scripted_mock:
      if (!descriptor.mock_profile) {
        throw SchemaError("backend.mock_profile",
                          "scripted_mock backends require a mock profile");
      }
      if (descriptor.mock_profile->trigger_pattern.empty()) {
        throw SchemaError("backend.mock_profile.trigger_pattern",
                          "trigger pattern must be nonempty");
      }
      break;
    case BackendKind::replay:
      if (!descriptor.cache_path || descriptor.cache_path->empty()) {
        throw SchemaError("backend.cache_path",
                          "replay backends require a cache path");
      }
      break;
  }
}

std::string mock_rule(const MockProfile& profile, const RenderedPrompt& prompt) {
  const std::string segment = detail::user_segment(prompt);
  const auto echo = [&](const std::string& s) {
    return profile.task_echo ? profile.task_echo(s) : s;
  };

  if (profile.vulnerability == Vulnerability::hardened) {
    return echo(segment);
  }

  const std::optional<std::string> payload =
      detail::extract_quoted_payload(segment);
  if (payload && detail::contains_ci(segment, profile.trigger_pattern)) {
    return *payload;
  }
  if (!payload && detail::contains_ci(segment, "instructions") &&
      (detail::contains_ci(segment, "print") ||
       detail::contains_ci(segment, "repeat"))) {
    return prompt.instruction_text;
  }
  return echo(segment);
}

HttpAdapterConfig load_http_adapter_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  detail::check_keys(doc, {"endpoint", "response_text_path"},
                     {"model_identifier", "request_template_fields",
                      "max_attempts", "initial_backoff_ms",
                      "requests_per_minute", "burst", "timeout_ms"},
                     "adapter");
  HttpAdapterConfig config;
  config.endpoint = detail::require_string(doc, "endpoint", "adapter");
  config.response_text_path =
      detail::require_string(doc, "response_text_path", "adapter");
  if (doc.contains("model_identifier")) {
    config.model_identifier =
        detail::require_string(doc, "model_identifier", "adapter");
  }
  if (doc.contains("request_template_fields")) {
    detail::require_object(doc.at("request_template_fields"),
                           "adapter.request_template_fields");
    config.request_template_fields = doc.at("request_template_fields");
  }
  if (doc.contains("max_attempts")) {
    config.max_attempts =
        static_cast<int>(detail::require_integer(doc, "max_attempts", "adapter"));
    if (config.max_attempts < 1) {
      throw SchemaError("adapter.max_attempts", "must be at least 1");
    }
  }
  if (doc.contains("initial_backoff_ms")) {
    config.initial_backoff_ms = static_cast<int>(
        detail::require_integer(doc, "initial_backoff_ms", "adapter"));
  }
  if (doc.contains("requests_per_minute")) {
    config.requests_per_minute =
        detail::require_number(doc, "requests_per_minute", "adapter");
  }
  if (doc.contains("burst")) {
    config.burst = detail::require_number(doc, "burst", "adapter");
  }
  if (doc.contains("timeout_ms")) {
    config.timeout_ms =
        static_cast<int>(detail::require_integer(doc, "timeout_ms", "adapter"));
  }
  return config;
}

TokenBucket::TokenBucket(double tokens_per_minute, double burst)
    : capacity_(std::max(1.0, burst)),
      tokens_(capacity_),
      per_ms_(tokens_per_minute / 60000.0),
      last_refill_(std::chrono::steady_clock::now()) {
  if (tokens_per_minute <= 0) per_ms_ = 0;  // disabled
}

void TokenBucket::acquire() {
  if (per_ms_ == 0) return;
  using clock = std::chrono::steady_clock;
  while (true) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard<std::mutex> lock(mu_);
      const auto now = clock::now();
      const double elapsed_ms =
          std::chrono::duration<double, std::milli>(now - last_refill_).count();
      tokens_ = std::min(capacity_, tokens_ + elapsed_ms * per_ms_);
      last_refill_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait = std::chrono::milliseconds(
          static_cast<long>((1.0 - tokens_) / per_ms_) + 1);
    }
    std::this_thread::sleep_for(wait);
  }
}

ReplayCache::ReplayCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in.is_open()) {
    return;  // fresh cache; the file appears on first record
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw StorageError(path_ + ":" + std::to_string(line_no) +
                         ": malformed cache line: " + e.what());
    }
    if (!obj.is_object() || !obj.contains("case_id") || !obj.contains("text")) {
      throw StorageError(path_ + ":" + std::to_string(line_no) +
                         ": cache line missing case_id/text");
    }
    Completion c;
    c.case_id = obj.at("case_id").get<std::string>();
    c.backend_name = obj.value("backend_name", std::string());
    c.text = obj.at("text").get<std::string>();
    c.latency_ms = obj.value("latency_ms", std::uint64_t{0});
    c.from_cache = false;
    auto [it, inserted] = entries_.insert_or_assign(c.case_id, std::move(c));
    (void)it;
    if (!inserted) {
      std::cerr << "injectprobe: warning: duplicate cache key at " << path_
                << ":" << line_no << ", keeping the later entry\n";
    }
  }
}

std::optional<Completion> ReplayCache::lookup(const std::string& case_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(case_id);
  if (it == entries_.end()) return std::nullopt;
  Completion c = it->second;
  c.from_cache = true;
  return c;
}

void ReplayCache::record(const std::string& case_id, const Completion& completion) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(case_id);
  if (it != entries_.end()) {
    const Completion& existing = it->second;
    if (existing.text == completion.text &&
        existing.backend_name == completion.backend_name &&
        existing.latency_ms == completion.latency_ms) {
      return;  // idempotent
    }
    std::cerr << "injectprobe: warning: overwriting cached completion for case "
              << case_id << "\n";
  }
  std::ofstream out(path_, std::ios::app);
  if (!out.is_open()) {
    throw StorageError("cannot open cache file for append: " + path_);
  }
  out << completion_to_json(case_id, completion).dump() << "\n";
  if (!out.good()) {
    throw StorageError("write failed: " + path_);
  }
  Completion stored = completion;
  stored.case_id = case_id;
  stored.from_cache = false;
  entries_.insert_or_assign(case_id, std::move(stored));
}

std::size_t ReplayCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

void record_completion(const std::string& cache_path, const std::string& case_id,
                       const Completion& completion) {
  ReplayCache cache(cache_path);
  cache.record(case_id, completion);
}

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post(const std::string& url,
                    const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, int timeout_ms) override {
    const std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw NetworkError("endpoint is not an absolute URL: " + url);
    }
    const std::size_t path_begin = url.find('/', scheme_end + 3);
    const std::string base =
        path_begin == std::string::npos ? url : url.substr(0, path_begin);
    const std::string path =
        path_begin == std::string::npos ? "/" : url.substr(path_begin);

    httplib::Client client(base);
    client.set_connection_timeout(0, timeout_ms * 1000LL);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    httplib::Headers hl;
    for (const auto& [k, v] : headers) hl.emplace(k, v);
    auto result = client.Post(path, hl, body, "application/json");
    if (!result) {
      throw NetworkError("request to " + url +
                         " failed: " + httplib::to_string(result.error()));
    }
    return HttpResponse{result->status, result->body};
  }
};

const json* walk_response_path(const json& doc, const std::string& dotted) {
  const json* node = &doc;
  std::stringstream ss(dotted);
  std::string segment;
  while (std::getline(ss, segment, '.')) {
    if (segment.empty()) return nullptr;
    const bool numeric =
        std::all_of(segment.begin(), segment.end(),
                    [](unsigned char c) { return std::isdigit(c) != 0; });
    if (numeric && node->is_array()) {
      const std::size_t idx = std::stoul(segment);
      if (idx >= node->size()) return nullptr;
      node = &node->at(idx);
    } else if (node->is_object() && node->contains(segment)) {
      node = &node->at(segment);
    } else {
      return nullptr;
    }
  }
  return node;
}

class MockBackend : public CompletionBackend {
 public:
  MockBackend(std::string name, MockProfile profile)
      : CompletionBackend(std::move(name)), profile_(std::move(profile)) {}

  Completion complete(const RenderedPrompt& prompt,
                      const ModelParams& params) override {
    (void)params;  // the scripted model ignores sampling parameters
    Completion c;
    c.case_id = prompt.case_id;
    c.backend_name = name_;
    c.text = mock_rule(profile_, prompt);
    c.latency_ms = 0;
    c.from_cache = false;
    return c;
  }

 private:
  MockProfile profile_;
};

class ReplayBackend : public CompletionBackend {
 public:
  ReplayBackend(std::string name, const std::string& cache_path)
      : CompletionBackend(std::move(name)), cache_(cache_path) {}

  Completion complete(const RenderedPrompt& prompt,
                      const ModelParams& params) override {
    (void)params;
    auto hit = cache_.lookup(prompt.case_id);
    if (!hit) {
      throw CacheMiss("no cached completion for case " + prompt.case_id +
                      " in " + cache_.path());
    }
    return *hit;
  }

 private:
  ReplayCache cache_;
};

class HttpBackend : public CompletionBackend {
 public:
  HttpBackend(std::string name, HttpAdapterConfig config,
              std::shared_ptr<HttpTransport> transport)
      : CompletionBackend(std::move(name)),
        config_(std::move(config)),
        transport_(std::move(transport)),
        bucket_(config_.requests_per_minute, config_.burst) {
    const char* key = std::getenv(kApiKeyEnvVar);
    if (key == nullptr || *key == '\0') {
      throw AuthError(std::string(kApiKeyEnvVar) +
                      " is not set; http_api backends require a credential");
    }
    api_key_ = key;
  }

  Completion complete(const RenderedPrompt& prompt,
                      const ModelParams& params) override {
    const std::string body = build_body(prompt, params);
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Authorization", "Bearer " + api_key_},
        {"Accept", "application/json"},
    };

    bool rate_limited_last = false;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      if (attempt > 1) {
        const int shift = std::min(attempt - 2, 16);
        const auto delay = std::chrono::milliseconds(
            static_cast<long>(config_.initial_backoff_ms) << shift);
        std::this_thread::sleep_for(delay);
      }
      bucket_.acquire();
      const auto start = std::chrono::steady_clock::now();
      HttpResponse response;
      try {
        response = transport_->post(config_.endpoint, headers, body,
                                    config_.timeout_ms);
      } catch (const NetworkError& e) {
        rate_limited_last = false;
        last_error = e.what();
        continue;
      }
      const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);

      if (response.status == 401 || response.status == 403) {
        throw AuthError("backend rejected the credential (HTTP " +
                        std::to_string(response.status) + ")");
      }
      if (response.status == 429) {
        rate_limited_last = true;
        last_error = "HTTP 429";
        continue;
      }
      if (response.status >= 500 || response.status == 408) {
        rate_limited_last = false;
        last_error = "HTTP " + std::to_string(response.status);
        continue;
      }
      if (response.status < 200 || response.status >= 300) {
        throw NetworkError("backend returned HTTP " +
                           std::to_string(response.status));
      }

      Completion c;
      c.case_id = prompt.case_id;
      c.backend_name = name_;
      c.text = extract_text(response.body);
      c.latency_ms = static_cast<std::uint64_t>(std::max<long long>(
          0, static_cast<long long>(latency.count())));
      c.from_cache = false;
      return c;
    }
    if (rate_limited_last) {
      throw RateLimited("rate limited after " +
                        std::to_string(config_.max_attempts) + " attempts");
    }
    throw NetworkError("request failed after " +
                       std::to_string(config_.max_attempts) +
                       " attempts: " + last_error);
  }

 private:
  std::string build_body(const RenderedPrompt& prompt,
                         const ModelParams& params) const {
    json body = config_.request_template_fields;
    if (!config_.model_identifier.empty()) {
      body["model"] = config_.model_identifier;
    }
    body["prompt"] = prompt.text;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_tokens;
    if (!params.stop_sequences.empty()) {
      body["stop"] = params.stop_sequences;
    }
    return body.dump();
  }

  std::string extract_text(const std::string& response_body) const {
    json doc;
    try {
      doc = json::parse(response_body);
    } catch (const json::parse_error& e) {
      throw NetworkError(std::string("malformed backend response: ") + e.what());
    }
    const json* node = walk_response_path(doc, config_.response_text_path);
    if (node == nullptr || !node->is_string()) {
      throw NetworkError("backend response has no text at '" +
                         config_.response_text_path + "'");
    }
    return node->get<std::string>();
  }

  HttpAdapterConfig config_;
  std::shared_ptr<HttpTransport> transport_;
  TokenBucket bucket_;
  std::string api_key_;
};

}  // namespace

std::shared_ptr<HttpTransport> default_http_transport() {
  return std::make_shared<HttplibTransport>();
}

std::unique_ptr<CompletionBackend> make_backend(
    const BackendDescriptor& descriptor, std::shared_ptr<HttpTransport> transport) {
  validate_descriptor(descriptor);
  switch (descriptor.kind) {
    case BackendKind::scripted_mock:
      return std::make_unique<MockBackend>(descriptor.name,
                                           *descriptor.mock_profile);
    case BackendKind::replay:
      return std::make_unique<ReplayBackend>(descriptor.name,
                                             *descriptor.cache_path);
    case BackendKind::http_api:
      return std::make_unique<HttpBackend>(
          descriptor.name, *descriptor.http,
          transport ? std::move(transport) : default_http_transport());
  }
  throw SchemaError("backend.kind", "unhandled backend kind");
}

Completion complete(const BackendDescriptor& descriptor,
                    const RenderedPrompt& prompt, const ModelParams& params) {
  return make_backend(descriptor)->complete(prompt, params);
}

}  // namespace injectprobe
