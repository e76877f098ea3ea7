#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "injectprobe/prompt.hpp"

namespace injectprobe {

enum class AttackCategory { goal_hijacking, prompt_leaking };

std::string_view to_string(AttackCategory category);
AttackCategory parse_attack_category(std::string_view name);

/// One adversarial user-input string. Goal-hijacking attacks carry the rogue
/// payload phrase they try to force as output; prompt-leaking attacks do not.
struct AttackString {
  std::string id;
  AttackCategory category = AttackCategory::goal_hijacking;
  std::string text;
  std::optional<std::string> rogue_string;
};

struct ModelParams {
  double temperature = 0.0;      // [0, 2]
  double top_p = 1.0;            // (0, 1]
  int max_tokens = 256;          // > 0
  std::vector<std::string> stop_sequences;  // at most 4
};

/// One fully specified attack trial. case_id is a stable 128-bit hex digest
/// of (template_id, attack_id, params, delimiter_mode).
struct AttackCase {
  std::string case_id;
  std::string template_id;
  std::string attack_id;
  ModelParams params;
  DelimiterMode delimiter_mode = DelimiterMode::raw;
};

struct ParamsGrid {
  std::vector<double> temperatures;
  std::vector<double> top_p;
  std::vector<int> max_tokens;
  std::vector<std::string> stop_sequences;  // applied to every case
};

struct AttackConfig {
  std::vector<PromptTemplate> templates;
  std::vector<AttackString> attacks;
  ParamsGrid params_grid;
  std::vector<DelimiterMode> delimiter_modes;
  double threshold = 80.0;  // (0, 100)
  std::string backend_name;
};

/// Id-indexed template list preserving catalog order. Rejects duplicate ids.
class TemplateCatalog {
 public:
  TemplateCatalog() = default;
  explicit TemplateCatalog(std::vector<PromptTemplate> templates);

  const PromptTemplate* find(const std::string& id) const;
  /// Throws UnresolvedReference when the id is unknown.
  const PromptTemplate& at(const std::string& id) const;
  const std::vector<PromptTemplate>& items() const { return items_; }

 private:
  std::vector<PromptTemplate> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

class AttackCatalog {
 public:
  AttackCatalog() = default;
  explicit AttackCatalog(std::vector<AttackString> attacks);

  const AttackString* find(const std::string& id) const;
  const AttackString& at(const std::string& id) const;
  const std::vector<AttackString>& items() const { return items_; }

 private:
  std::vector<AttackString> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses and validates an attack configuration document
/// (strict schema, top-level "schema_version": 1).
/// Throws ParseError on malformed JSON, SchemaError with the offending path
/// on schema or range violations.
AttackConfig load_config(const std::string& json_text);

/// Canonical JSON rendering of a config, re-loadable by load_config.
std::string config_to_json(const AttackConfig& config);

/// Validates a programmatically built config; throws SchemaError.
void validate_config(const AttackConfig& config);

/// The shipped catalog: 35 templates spanning every task kind and 10 attack
/// strings (5 goal-hijacking, 5 prompt-leaking).
std::pair<std::vector<PromptTemplate>, std::vector<AttackString>> builtin_catalog();

/// builtin_catalog() wrapped in a runnable default config
/// (single-point parameter grid, both delimiter modes, threshold 80).
AttackConfig builtin_config();

/// Full cartesian product templates x attacks x temperatures x top_p x
/// max_tokens x delimiter_modes, templates outermost and delimiter_modes
/// innermost, every factor in config order. Throws EmptyFactor if any factor
/// list is empty.
std::vector<AttackCase> build_attack_matrix(const AttackConfig& config);

/// Stable digest over the canonical serialization of one case.
std::string case_digest(const std::string& template_id,
                        const std::string& attack_id, const ModelParams& params,
                        DelimiterMode mode);

/// Digest binding reports to the generating configuration.
std::string config_digest(const AttackConfig& config);

/// Matrix rendering for `matrix build` (JSON document with the case list).
std::string matrix_to_json(const std::vector<AttackCase>& matrix,
                           const std::string& config_digest_hex);

}  // namespace injectprobe
