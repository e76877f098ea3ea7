#include "injectprobe/pipeline.hpp"

#include <atomic>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "injectprobe/digest.hpp"
#include "injectprobe/errors.hpp"
#include "json_detail.hpp"

namespace injectprobe {

namespace {

namespace fs = std::filesystem;
using detail::json;
using ordered_json = nlohmann::ordered_json;

}  // namespace

std::string current_timestamp() {
  std::time_t t = 0;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
      epoch != nullptr && *epoch != '\0') {
    t = static_cast<std::time_t>(std::atoll(epoch));
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string run_log_entry_to_json(const RunLogEntry& entry) {
  ordered_json obj;
  obj["case_id"] = entry.case_id;
  obj["config_digest"] = entry.config_digest;
  obj["backend_name"] = entry.backend_name;
  obj["template_id"] = entry.template_id;
  obj["attack_id"] = entry.attack_id;
  obj["category"] = std::string(to_string(entry.category));
  obj["delimiter_mode"] = std::string(to_string(entry.delimiter_mode));
  ordered_json params;
  params["temperature"] = entry.params.temperature;
  params["top_p"] = entry.params.top_p;
  params["max_tokens"] = entry.params.max_tokens;
  params["stop_sequences"] = entry.params.stop_sequences;
  obj["params"] = std::move(params);
  obj["prompt"] = entry.prompt;
  obj["completion"] = entry.completion;
  obj["target_text"] = entry.target_text;
  obj["latency_ms"] = entry.latency_ms;
  obj["from_cache"] = entry.from_cache;
  obj["similarity"] = entry.similarity;
  obj["threshold"] = entry.threshold;
  obj["success"] = entry.success;
  obj["target_kind"] = std::string(to_string(entry.target_kind));
  return obj.dump();
}

RunLogEntry run_log_entry_from_json(const std::string& line,
                                    const std::string& where) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": malformed run-log line: " + e.what());
  }
  detail::check_keys(
      obj,
      {"case_id", "config_digest", "backend_name", "template_id", "attack_id",
       "category", "delimiter_mode", "params", "prompt", "completion",
       "target_text", "latency_ms", "from_cache", "similarity", "threshold",
       "success", "target_kind"},
      {}, where);
  RunLogEntry entry;
  entry.case_id = detail::require_string(obj, "case_id", where);
  entry.config_digest = detail::require_string(obj, "config_digest", where);
  entry.backend_name = detail::require_string(obj, "backend_name", where);
  entry.template_id = detail::require_string(obj, "template_id", where);
  entry.attack_id = detail::require_string(obj, "attack_id", where);
  entry.category =
      parse_attack_category(detail::require_string(obj, "category", where));
  entry.delimiter_mode =
      parse_delimiter_mode(detail::require_string(obj, "delimiter_mode", where));
  const json& params = obj.at("params");
  detail::check_keys(params,
                     {"temperature", "top_p", "max_tokens", "stop_sequences"},
                     {}, where + ".params");
  entry.params.temperature =
      detail::require_number(params, "temperature", where + ".params");
  entry.params.top_p = detail::require_number(params, "top_p", where + ".params");
  entry.params.max_tokens = static_cast<int>(
      detail::require_integer(params, "max_tokens", where + ".params"));
  for (const auto& s : params.at("stop_sequences")) {
    entry.params.stop_sequences.push_back(s.get<std::string>());
  }
  entry.prompt = detail::require_string(obj, "prompt", where);
  entry.completion = detail::require_string(obj, "completion", where);
  entry.target_text = detail::require_string(obj, "target_text", where);
  entry.latency_ms = obj.at("latency_ms").get<std::uint64_t>();
  entry.from_cache = obj.at("from_cache").get<bool>();
  entry.similarity = detail::require_number(obj, "similarity", where);
  entry.threshold = detail::require_number(obj, "threshold", where);
  entry.success = obj.at("success").get<bool>();
  entry.target_kind =
      parse_target_kind(detail::require_string(obj, "target_kind", where));
  return entry;
}

std::vector<RunLogEntry> load_run_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw StorageError("cannot open run log: " + path);
  }
  std::vector<RunLogEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    entries.push_back(
        run_log_entry_from_json(line, path + ":" + std::to_string(line_no)));
  }
  return entries;
}

RunReport rescore_run_log(const std::vector<RunLogEntry>& entries,
                          double threshold, const std::string& run_id,
                          const std::string& created_at) {
  if (threshold <= 0.0 || threshold >= 100.0) {
    throw SchemaError("threshold", "threshold must be in (0, 100)");
  }
  std::string digest;
  std::vector<ScoreResult> results;
  std::map<std::string, CaseMeta> meta;
  for (const RunLogEntry& entry : entries) {
    if (digest.empty()) {
      digest = entry.config_digest;
    } else if (digest != entry.config_digest) {
      throw InconsistentRecord(
          "run log mixes entries from different configurations");
    }
    ScoreResult r;
    r.case_id = entry.case_id;
    r.category = entry.category;
    r.similarity = similarity(normalize_for_scoring(entry.completion),
                              normalize_for_scoring(entry.target_text));
    r.threshold = threshold;
    r.success = r.similarity > threshold;
    r.target_kind = entry.target_kind;
    results.push_back(std::move(r));
    meta[entry.case_id] =
        CaseMeta{entry.backend_name, entry.category, entry.delimiter_mode};
  }
  ReportContext context;
  context.run_id = run_id;
  context.config_digest = digest;
  context.created_at = created_at;
  context.threshold = threshold;
  return aggregate(results, meta, context);
}

std::vector<RunRecord> run_records_from_log(
    const std::vector<RunLogEntry>& entries) {
  std::vector<RunRecord> records;
  records.reserve(entries.size());
  for (const RunLogEntry& entry : entries) {
    RunRecord r;
    r.attack_case.case_id = entry.case_id;
    r.attack_case.template_id = entry.template_id;
    r.attack_case.attack_id = entry.attack_id;
    r.attack_case.params = entry.params;
    r.attack_case.delimiter_mode = entry.delimiter_mode;
    r.prompt.text = entry.prompt;
    r.prompt.case_id = entry.case_id;
    r.prompt.delimiter_mode = entry.delimiter_mode;
    r.completion.case_id = entry.case_id;
    r.completion.backend_name = entry.backend_name;
    r.completion.text = entry.completion;
    r.completion.latency_ms = entry.latency_ms;
    r.completion.from_cache = entry.from_cache;
    r.score.case_id = entry.case_id;
    r.score.category = entry.category;
    r.score.similarity = entry.similarity;
    r.score.threshold = entry.threshold;
    r.score.success = entry.success;
    r.score.target_kind = entry.target_kind;
    records.push_back(std::move(r));
  }
  return records;
}

std::string manifest_to_json(const RunManifest& manifest) {
  json doc;
  doc["schema_version"] = 1;
  doc["run_id"] = manifest.run_id;
  doc["status"] = manifest.status;
  doc["config_digest"] = manifest.config_digest;
  doc["backend_names"] = manifest.backend_names;
  doc["started_at"] = manifest.started_at;
  doc["finished_at"] = manifest.finished_at;
  json counts;
  counts["cases"] = manifest.counts.cases;
  counts["completions"] = manifest.counts.completions;
  counts["errors"] = manifest.counts.errors;
  doc["counts"] = std::move(counts);
  json artifacts;
  artifacts["run_log"] = manifest.artifacts.run_log;
  artifacts["report"] = manifest.artifacts.report;
  artifacts["completions_cache"] = manifest.artifacts.completions_cache;
  artifacts["manifest"] = manifest.artifacts.manifest;
  doc["artifacts"] = std::move(artifacts);
  return doc.dump(2) + "\n";
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) {
    throw StorageError("cannot open for writing: " + path);
  }
  out << content;
  if (!out.good()) {
    throw StorageError("write failed: " + path);
  }
}

}  // namespace

RunManifest run_pipeline(const AttackConfig& config,
                         const BackendDescriptor& backend_descriptor,
                         const RunOptions& options,
                         std::shared_ptr<HttpTransport> transport) {
  validate_config(config);
  validate_descriptor(backend_descriptor);
  const double threshold = options.threshold.value_or(config.threshold);
  if (threshold <= 0.0 || threshold >= 100.0) {
    throw SchemaError("threshold", "threshold must be in (0, 100)");
  }
  const int concurrency = std::max(1, options.concurrency);

  const std::vector<AttackCase> matrix = build_attack_matrix(config);
  const TemplateCatalog templates(config.templates);
  const AttackCatalog attacks(config.attacks);
  const std::string cfg_digest = config_digest(config);

  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) {
    throw StorageError("cannot create output directory " + options.out_dir +
                       ": " + ec.message());
  }

  RunManifest manifest;
  manifest.started_at = current_timestamp();
  manifest.run_id = digest_hex128("run-v1\x1f" + cfg_digest + "\x1f" +
                                  format_double(threshold) + "\x1f" +
                                  manifest.started_at);
  manifest.status = "running";
  manifest.config_digest = cfg_digest;
  manifest.backend_names = {backend_descriptor.name};
  manifest.counts.cases = matrix.size();
  manifest.artifacts.run_log = (fs::path(options.out_dir) / "run_log.jsonl").string();
  manifest.artifacts.report = (fs::path(options.out_dir) / "report.json").string();
  manifest.artifacts.completions_cache =
      (fs::path(options.out_dir) / "completions.jsonl").string();
  manifest.artifacts.manifest =
      (fs::path(options.out_dir) / "manifest.json").string();

  std::unique_ptr<CompletionBackend> backend =
      make_backend(backend_descriptor, std::move(transport));
  ReplayCache cache(manifest.artifacts.completions_cache);

  std::ofstream log_stream(manifest.artifacts.run_log,
                           std::ios::binary | std::ios::trunc);
  if (!log_stream.is_open()) {
    throw StorageError("cannot open run log for writing: " +
                       manifest.artifacts.run_log);
  }

  std::vector<std::optional<RunLogEntry>> entries(matrix.size());
  std::vector<std::optional<std::string>> case_errors(matrix.size());
  std::atomic<std::size_t> next_case{0};
  std::atomic<bool> aborted{false};
  std::mutex log_mu;
  std::mutex fatal_mu;
  std::exception_ptr fatal;

  const auto worker = [&] {
    while (!aborted.load(std::memory_order_relaxed)) {
      const std::size_t i = next_case.fetch_add(1, std::memory_order_relaxed);
      if (i >= matrix.size()) return;
      const AttackCase& attack_case = matrix[i];
      try {
        const PromptTemplate& tmpl = templates.at(attack_case.template_id);
        const AttackString& attack = attacks.at(attack_case.attack_id);
        RenderedPrompt rendered =
            render(tmpl, attack.text, attack_case.delimiter_mode);
        rendered.case_id = attack_case.case_id;

        Completion completion = backend->complete(rendered, attack_case.params);
        completion.case_id = attack_case.case_id;
        // Every completion hits the run cache before it is scored.
        cache.record(attack_case.case_id, completion);

        const ScoreResult score =
            score_case(attack_case, completion.text, rendered, threshold,
                       templates, attacks);

        RunLogEntry entry;
        entry.case_id = attack_case.case_id;
        entry.config_digest = cfg_digest;
        entry.backend_name = completion.backend_name;
        entry.template_id = attack_case.template_id;
        entry.attack_id = attack_case.attack_id;
        entry.category = attack.category;
        entry.delimiter_mode = attack_case.delimiter_mode;
        entry.params = attack_case.params;
        entry.prompt = rendered.text;
        entry.completion = completion.text;
        entry.target_text = attack.category == AttackCategory::goal_hijacking
                                ? attack.rogue_string.value_or("")
                                : tmpl.instruction_text;
        entry.latency_ms = completion.latency_ms;
        entry.from_cache = completion.from_cache;
        entry.similarity = score.similarity;
        entry.threshold = score.threshold;
        entry.success = score.success;
        entry.target_kind = score.target_kind;

        {
          // Append in completion order and flush per line so an aborted run
          // still leaves a parseable log.
          std::lock_guard<std::mutex> lock(log_mu);
          log_stream << run_log_entry_to_json(entry) << "\n";
          log_stream.flush();
        }
        entries[i] = std::move(entry);
      } catch (const AuthError&) {
        case_errors[i] = "auth error";
        {
          std::lock_guard<std::mutex> lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
        }
        aborted.store(true, std::memory_order_relaxed);
      } catch (const StorageError&) {
        case_errors[i] = "storage error";
        {
          std::lock_guard<std::mutex> lock(fatal_mu);
          if (!fatal) fatal = std::current_exception();
        }
        aborted.store(true, std::memory_order_relaxed);
      } catch (const Error& e) {
        case_errors[i] = e.what();
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(concurrency));
  for (int i = 0; i < concurrency; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  std::size_t completions = 0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < matrix.size(); ++i) {
    if (entries[i]) {
      ++completions;
    } else if (case_errors[i]) {
      ++errors;
    }
  }

  if (aborted.load()) {
    // Unclaimed cases were never attempted; count them as errors so the
    // manifest arithmetic still holds.
    errors = matrix.size() - completions;
    manifest.status = "aborted";
    manifest.counts.completions = completions;
    manifest.counts.errors = errors;
    manifest.finished_at = current_timestamp();
    log_stream.flush();
    write_file(manifest.artifacts.manifest, manifest_to_json(manifest));
    std::lock_guard<std::mutex> lock(fatal_mu);
    if (fatal) std::rethrow_exception(fatal);
    throw Error("run aborted");
  }

  // Rewrite the log in canonical matrix order so worker scheduling never
  // shows up in the artifact.
  log_stream.close();
  {
    const std::string tmp = manifest.artifacts.run_log + ".tmp";
    std::string content;
    for (const auto& entry : entries) {
      if (entry) {
        content += run_log_entry_to_json(*entry);
        content += "\n";
      }
    }
    write_file(tmp, content);
    fs::rename(tmp, manifest.artifacts.run_log, ec);
    if (ec) {
      throw StorageError("cannot finalize run log: " + ec.message());
    }
  }

  std::vector<ScoreResult> results;
  std::map<std::string, CaseMeta> meta;
  for (const auto& entry : entries) {
    if (!entry) continue;
    ScoreResult r;
    r.case_id = entry->case_id;
    r.category = entry->category;
    r.similarity = entry->similarity;
    r.threshold = entry->threshold;
    r.success = entry->success;
    r.target_kind = entry->target_kind;
    results.push_back(std::move(r));
    meta[entry->case_id] =
        CaseMeta{entry->backend_name, entry->category, entry->delimiter_mode};
  }

  manifest.finished_at = current_timestamp();
  ReportContext context;
  context.run_id = manifest.run_id;
  context.config_digest = cfg_digest;
  context.created_at = manifest.finished_at;
  context.threshold = threshold;
  const RunReport report = aggregate(results, meta, context);
  write_file(manifest.artifacts.report, emit_report(report, ReportFormat::json));

  manifest.status = "finished";
  manifest.counts.completions = completions;
  manifest.counts.errors = errors;
  write_file(manifest.artifacts.manifest, manifest_to_json(manifest));

  if (!options.quiet) {
    std::cerr << "run " << manifest.run_id << ": " << completions << "/"
              << matrix.size() << " cases completed, " << errors << " errors\n";
  }
  return manifest;
}

}  // namespace injectprobe
