#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace injectprobe {

/// Delimiter tags that separate trusted instruction text from untrusted user
/// input. Rendered with exactly one space of padding inside each tag.
inline constexpr std::string_view kOpenTag = "<userInput>";
inline constexpr std::string_view kCloseTag = "</userInput>";

/// Reserved placeholder token marking the splice point of cloze templates.
inline constexpr std::string_view kUserInputMarker = "{user_input}";

enum class TaskKind {
  grammar_correction,
  translation,
  sentiment,
  summarization,
  question_answering,
  code_generation,
  other,
};

/// prefix: user input is appended after the instruction.
/// cloze: user input replaces the placeholder marker inside the instruction.
enum class PromptShape { prefix, cloze };

/// raw: user input spliced in verbatim. tagged: user input wrapped in the
/// delimiter tags first.
enum class DelimiterMode { raw, tagged };

std::string_view to_string(TaskKind kind);
std::string_view to_string(PromptShape shape);
std::string_view to_string(DelimiterMode mode);
TaskKind parse_task_kind(std::string_view name);
PromptShape parse_prompt_shape(std::string_view name);
DelimiterMode parse_delimiter_mode(std::string_view name);

/// A task instruction with a declared user-input placement.
struct PromptTemplate {
  std::string id;
  TaskKind task_kind = TaskKind::other;
  std::string instruction_text;
  PromptShape shape = PromptShape::prefix;
  /// Optional in catalogs; when present it must equal kUserInputMarker.
  std::optional<std::string> placeholder;
  std::optional<std::string> benign_input_example;
};

/// A final model input produced by render().
struct RenderedPrompt {
  std::string text;
  std::string case_id;  // empty until bound to an AttackCase
  DelimiterMode delimiter_mode = DelimiterMode::raw;
  /// The user input as spliced (unwrapped). Kept so consumers that need the
  /// untrusted segment of a raw render do not have to re-locate the splice.
  std::string user_input;
  /// The owning template's instruction text, verbatim.
  std::string instruction_text;
};

/// Returns every invariant violation of `t`; empty means the template is ok.
/// Violations are data, not failures.
std::vector<std::string> validate_template(const PromptTemplate& t);

/// `<userInput> ` + user_input + ` </userInput>`.
/// Throws DelimiterCollision if user_input contains either literal tag.
std::string wrap_user_input(const std::string& user_input);

/// Opt-in pre-pass for callers that want to sanitize instead of reject:
/// deletes every literal tag substring (repeatedly, so deletions cannot
/// reassemble a tag).
std::string strip_delimiters(std::string user_input);

/// Splices `user_input` (wrapped when mode is tagged) into the template.
/// Throws DelimiterCollision (propagated from wrap_user_input) and
/// std::invalid_argument if the template fails validation.
RenderedPrompt render(const PromptTemplate& t, const std::string& user_input,
                      DelimiterMode mode);

/// Inverse of tagged rendering: the content strictly between the padded tags.
/// Throws MalformedDelimiters if tags are absent, duplicated, out of order,
/// or missing their padding.
std::string extract_user_input(const RenderedPrompt& rendered);

/// Counts non-overlapping occurrences of `needle` in `haystack`.
std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

/// Strict template-catalog loader: a JSON array of objects with keys
/// id, task_kind, instruction_text, shape and optional
/// placeholder / benign_input_example. Unknown keys are rejected.
/// Throws ParseError / SchemaError.
std::vector<PromptTemplate> load_template_catalog(const std::string& json_text);

std::string template_catalog_to_json(const std::vector<PromptTemplate>& templates);

}  // namespace injectprobe
