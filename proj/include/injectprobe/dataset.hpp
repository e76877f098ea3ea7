#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "injectprobe/attack.hpp"
#include "injectprobe/backend.hpp"
#include "injectprobe/prompt.hpp"
#include "injectprobe/scoring.hpp"

namespace injectprobe {

/// One benign training sample: task input and its correct output.
struct TaskPair {
  TaskKind task_kind = TaskKind::other;
  std::string input_text;
  std::string target_text;
};

/// A tagged prompt / safe-completion pair for defense-dataset emission.
/// Adversarial examples carry an attack inside the tagged span while the
/// completion still treats that attack text as data.
struct FineTuneExample {
  std::string prompt;
  std::string completion;
  bool adversarial = false;
  std::string template_id;
  std::optional<std::string> attack_id;
};

struct RLExample {
  std::string prompt;
  std::string completion;
  int reward = 0;  // +100 or -100
};

/// One executed case as recorded in a run: the inputs and the verdict.
struct RunRecord {
  AttackCase attack_case;
  RenderedPrompt prompt;
  Completion completion;
  ScoreResult score;
};

/// Loads task pairs from a CSV file with the exact header `input,target`
/// (RFC-4180 quoting; UTF-8). Throws StorageError when the file cannot be
/// read, ParseError/SchemaError on malformed content.
std::vector<TaskPair> load_task_pairs_csv(const std::string& path,
                                          TaskKind kind);

/// Builds the adversarial fine-tuning dataset. Every pair yields one example
/// rendered tagged against the first catalog template of its task kind; with
/// probability injection_rate (seeded, deterministic) a seeded-uniformly
/// chosen attack is appended to the input and the completion extends the
/// target so the attack text is handled as task data. Throws MissingTemplate
/// when a pair's task kind has no template; propagates DelimiterCollision.
std::vector<FineTuneExample> build_finetune_dataset(
    const std::vector<TaskPair>& pairs, const TemplateCatalog& templates,
    const AttackCatalog& attacks, double injection_rate, std::uint64_t seed);

/// Emits prompt/completion pairs as JSON lines, exactly two keys per object,
/// UTF-8, LF endings. The completion field is serialized as
/// completion_prefix + completion + completion_suffix. Returns the number of
/// lines written. Throws StorageError.
std::size_t emit_jsonl(const std::vector<FineTuneExample>& examples,
                       const std::string& path,
                       const std::string& completion_prefix = " ",
                       const std::string& completion_suffix = "\n###");

/// Reward labeling: -100 for records whose score says the attack succeeded,
/// +100 otherwise. Throws InconsistentRecord on case_id mismatches inside a
/// record.
std::vector<RLExample> build_rl_dataset(const std::vector<RunRecord>& run);

/// JSON lines with keys {prompt, completion, reward}. Returns lines written.
std::size_t emit_rl_jsonl(const std::vector<RLExample>& examples,
                          const std::string& path);

/// Normalizes a sentence the way the grammar-correction safe completions do:
/// trims, drops trailing ':'/';'/',', uppercases the first letter and ends
/// the sentence with '.' (inserted before a trailing quote when present).
std::string grammar_fix(const std::string& text);

}  // namespace injectprobe
