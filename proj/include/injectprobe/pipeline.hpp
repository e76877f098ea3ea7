#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "injectprobe/attack.hpp"
#include "injectprobe/backend.hpp"
#include "injectprobe/dataset.hpp"
#include "injectprobe/report.hpp"
#include "injectprobe/scoring.hpp"

namespace injectprobe {

struct RunCounts {
  std::size_t cases = 0;
  std::size_t completions = 0;
  std::size_t errors = 0;
};

struct RunArtifacts {
  std::string run_log;
  std::string report;
  std::string completions_cache;
  std::string manifest;
};

struct RunManifest {
  std::string run_id;
  std::string status;  // "finished" or "aborted"
  std::string config_digest;
  std::vector<std::string> backend_names;
  std::string started_at;
  std::string finished_at;
  RunCounts counts;
  RunArtifacts artifacts;
};

struct RunOptions {
  int concurrency = 4;
  std::optional<double> threshold;  // overrides the config threshold
  std::string out_dir;
  bool quiet = false;
};

/// One executed case as persisted in the run log (JSON lines, one object per
/// line). Lines are self-contained: they carry the scoring target so
/// threshold sweeps never need the config or the backend again.
struct RunLogEntry {
  std::string case_id;
  std::string config_digest;
  std::string backend_name;
  std::string template_id;
  std::string attack_id;
  AttackCategory category = AttackCategory::goal_hijacking;
  DelimiterMode delimiter_mode = DelimiterMode::raw;
  ModelParams params;
  std::string prompt;
  std::string completion;
  std::string target_text;
  std::uint64_t latency_ms = 0;
  bool from_cache = false;
  double similarity = 0.0;
  double threshold = 80.0;
  bool success = false;
  TargetKind target_kind = TargetKind::rogue_string;
};

std::string run_log_entry_to_json(const RunLogEntry& entry);
RunLogEntry run_log_entry_from_json(const std::string& line,
                                    const std::string& where);

/// Loads a whole run log; throws StorageError / ParseError / SchemaError.
std::vector<RunLogEntry> load_run_log(const std::string& path);

/// Re-scores logged completions at a (possibly different) threshold.
/// Similarities are recomputed from completion and target text; success flags
/// follow the new threshold. No backend is ever touched.
RunReport rescore_run_log(const std::vector<RunLogEntry>& entries,
                          double threshold, const std::string& run_id,
                          const std::string& created_at);

/// Adapts run-log lines to reward-labeled records.
std::vector<RunRecord> run_records_from_log(const std::vector<RunLogEntry>& entries);

/// ISO-8601 UTC timestamp. Honors SOURCE_DATE_EPOCH when set so reruns can
/// be byte-reproducible.
std::string current_timestamp();

std::string manifest_to_json(const RunManifest& manifest);

/// Executes the full attack matrix against one backend with bounded
/// concurrency: render, complete, record to the run cache, score, log.
/// Writes run_log.jsonl, completions.jsonl, report.json and manifest.json
/// into out_dir. Per-case backend failures are counted as errors; AuthError
/// and StorageError abort the run (partial results are flushed with
/// status = "aborted" before the exception propagates).
RunManifest run_pipeline(const AttackConfig& config,
                         const BackendDescriptor& backend,
                         const RunOptions& options,
                         std::shared_ptr<HttpTransport> transport = nullptr);

}  // namespace injectprobe
