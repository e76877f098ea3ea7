#include "injectprobe/prompt.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "injectprobe/errors.hpp"
#include "json_detail.hpp"

namespace injectprobe {

namespace {

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::grammar_correction: return "grammar_correction";
    case TaskKind::translation: return "translation";
    case TaskKind::sentiment: return "sentiment";
    case TaskKind::summarization: return "summarization";
    case TaskKind::question_answering: return "question_answering";
    case TaskKind::code_generation: return "code_generation";
    case TaskKind::other: return "other";
  }
  return "other";
}

std::string_view to_string(PromptShape shape) {
  return shape == PromptShape::prefix ? "prefix" : "cloze";
}

std::string_view to_string(DelimiterMode mode) {
  return mode == DelimiterMode::raw ? "raw" : "tagged";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k :
       {TaskKind::grammar_correction, TaskKind::translation, TaskKind::sentiment,
        TaskKind::summarization, TaskKind::question_answering,
        TaskKind::code_generation, TaskKind::other}) {
    if (name == to_string(k)) return k;
  }
  throw SchemaError("task_kind", "unknown task kind '" + std::string(name) + "'");
}

PromptShape parse_prompt_shape(std::string_view name) {
  if (name == "prefix") return PromptShape::prefix;
  if (name == "cloze") return PromptShape::cloze;
  throw SchemaError("shape", "unknown prompt shape '" + std::string(name) + "'");
}

DelimiterMode parse_delimiter_mode(std::string_view name) {
  if (name == "raw") return DelimiterMode::raw;
  if (name == "tagged") return DelimiterMode::tagged;
  throw SchemaError("delimiter_mode",
                    "unknown delimiter mode '" + std::string(name) + "'");
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

std::vector<std::string> validate_template(const PromptTemplate& t) {
  std::vector<std::string> violations;

  const auto first = std::find_if_not(t.instruction_text.begin(),
                                      t.instruction_text.end(), is_space);
  if (first == t.instruction_text.end()) {
    violations.push_back("empty instruction");
  }

  const std::size_t markers =
      count_occurrences(t.instruction_text, kUserInputMarker);
  if (t.shape == PromptShape::cloze) {
    if (markers == 0) {
      violations.push_back("missing placeholder");
    } else if (markers > 1) {
      violations.push_back("multiple placeholders");
    }
  } else if (markers != 0) {
    violations.push_back("unexpected placeholder in prefix template");
  }

  if (t.placeholder && *t.placeholder != kUserInputMarker) {
    violations.push_back("placeholder must be '" + std::string(kUserInputMarker) +
                         "'");
  }
  return violations;
}

std::string wrap_user_input(const std::string& user_input) {
  if (user_input.find(kOpenTag) != std::string::npos ||
      user_input.find(kCloseTag) != std::string::npos) {
    throw DelimiterCollision("user input contains a literal delimiter tag");
  }
  std::string out;
  out.reserve(user_input.size() + kOpenTag.size() + kCloseTag.size() + 2);
  out.append(kOpenTag);
  out.push_back(' ');
  out.append(user_input);
  out.push_back(' ');
  out.append(kCloseTag);
  return out;
}

std::string strip_delimiters(std::string user_input) {
  // Re-scan after every deletion so removals cannot splice a new tag together.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::string_view tag : {kCloseTag, kOpenTag}) {
      std::size_t pos;
      while ((pos = user_input.find(tag)) != std::string::npos) {
        user_input.erase(pos, tag.size());
        changed = true;
      }
    }
  }
  return user_input;
}

RenderedPrompt render(const PromptTemplate& t, const std::string& user_input,
                      DelimiterMode mode) {
  const auto violations = validate_template(t);
  if (!violations.empty()) {
    throw SchemaError("template '" + t.id + "'", join(violations, "; "));
  }

  const std::string spliced =
      mode == DelimiterMode::tagged ? wrap_user_input(user_input) : user_input;

  RenderedPrompt rendered;
  rendered.delimiter_mode = mode;
  rendered.user_input = user_input;
  rendered.instruction_text = t.instruction_text;

  if (t.shape == PromptShape::prefix) {
    rendered.text = t.instruction_text + spliced;
  } else {
    const std::size_t pos = t.instruction_text.find(kUserInputMarker);
    rendered.text = t.instruction_text.substr(0, pos) + spliced +
                    t.instruction_text.substr(pos + kUserInputMarker.size());
  }
  return rendered;
}

std::string extract_user_input(const RenderedPrompt& rendered) {
  if (rendered.delimiter_mode != DelimiterMode::tagged) {
    throw MalformedDelimiters("prompt is not delimiter-tagged");
  }
  const std::string& text = rendered.text;
  if (count_occurrences(text, kOpenTag) != 1 ||
      count_occurrences(text, kCloseTag) != 1) {
    throw MalformedDelimiters("expected exactly one open and one close tag");
  }
  const std::size_t open = text.find(kOpenTag);
  const std::size_t close = text.find(kCloseTag);
  const std::size_t content_begin = open + kOpenTag.size() + 1;
  if (close < open + kOpenTag.size()) {
    throw MalformedDelimiters("close tag precedes open tag");
  }
  if (open + kOpenTag.size() >= text.size() ||
      text[open + kOpenTag.size()] != ' ' || close == 0 ||
      text[close - 1] != ' ' || close < content_begin + 1) {
    throw MalformedDelimiters("missing tag padding");
  }
  return text.substr(content_begin, close - 1 - content_begin);
}

namespace detail {

void require_object(const json& value, const std::string& path) {
  if (!value.is_object()) {
    throw SchemaError(path, "expected a JSON object");
  }
}

void require_array(const json& value, const std::string& path) {
  if (!value.is_array()) {
    throw SchemaError(path, "expected a JSON array");
  }
}

void check_keys(const json& obj, std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional,
                const std::string& path) {
  require_object(obj, path);
  for (const char* key : required) {
    if (!obj.contains(key)) {
      throw SchemaError(path, std::string("missing required key '") + key + "'");
    }
  }
  for (const auto& item : obj.items()) {
    const auto known = [&](std::initializer_list<const char*> keys) {
      return std::any_of(keys.begin(), keys.end(),
                         [&](const char* k) { return item.key() == k; });
    };
    if (!known(required) && !known(optional)) {
      throw SchemaError(path + "." + item.key(), "unknown key");
    }
  }
}

std::string require_string(const json& obj, const char* key,
                           const std::string& path) {
  if (!obj.contains(key) || !obj.at(key).is_string()) {
    throw SchemaError(path + "." + key, "expected a string");
  }
  return obj.at(key).get<std::string>();
}

double require_number(const json& obj, const char* key, const std::string& path) {
  if (!obj.contains(key) || !obj.at(key).is_number()) {
    throw SchemaError(path + "." + key, "expected a number");
  }
  return obj.at(key).get<double>();
}

long long require_integer(const json& obj, const char* key,
                          const std::string& path) {
  if (!obj.contains(key) || !obj.at(key).is_number_integer()) {
    throw SchemaError(path + "." + key, "expected an integer");
  }
  return obj.at(key).get<long long>();
}

std::string trim_copy(const std::string& s) {
  auto begin = std::find_if_not(s.begin(), s.end(), is_space);
  auto end = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
  return begin < end ? std::string(begin, end) : std::string();
}

PromptTemplate template_from_json(const json& obj, const std::string& path) {
  check_keys(obj, {"id", "task_kind", "instruction_text", "shape"},
             {"placeholder", "benign_input_example"}, path);
  PromptTemplate t;
  t.id = require_string(obj, "id", path);
  t.task_kind = parse_task_kind(require_string(obj, "task_kind", path));
  t.instruction_text = require_string(obj, "instruction_text", path);
  t.shape = parse_prompt_shape(require_string(obj, "shape", path));
  if (obj.contains("placeholder")) {
    t.placeholder = require_string(obj, "placeholder", path);
  }
  if (obj.contains("benign_input_example")) {
    t.benign_input_example = require_string(obj, "benign_input_example", path);
  }
  if (t.id.empty()) {
    throw SchemaError(path + ".id", "id must be nonempty");
  }
  const auto violations = validate_template(t);
  if (!violations.empty()) {
    throw SchemaError(path, join(violations, "; "));
  }
  return t;
}

json template_to_json(const PromptTemplate& t) {
  json obj;
  obj["id"] = t.id;
  obj["task_kind"] = std::string(to_string(t.task_kind));
  obj["instruction_text"] = t.instruction_text;
  obj["shape"] = std::string(to_string(t.shape));
  if (t.placeholder) obj["placeholder"] = *t.placeholder;
  if (t.benign_input_example) obj["benign_input_example"] = *t.benign_input_example;
  return obj;
}

}  // namespace detail

std::vector<PromptTemplate> load_template_catalog(const std::string& json_text) {
  detail::json doc;
  try {
    doc = detail::json::parse(json_text);
  } catch (const detail::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  detail::require_array(doc, "templates");

  std::vector<PromptTemplate> templates;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string path = "templates[" + std::to_string(i) + "]";
    PromptTemplate t = detail::template_from_json(doc.at(i), path);
    if (!ids.insert(t.id).second) {
      throw SchemaError(path + ".id", "duplicate template id '" + t.id + "'");
    }
    templates.push_back(std::move(t));
  }
  return templates;
}

std::string template_catalog_to_json(const std::vector<PromptTemplate>& templates) {
  detail::json arr = detail::json::array();
  for (const auto& t : templates) {
    arr.push_back(detail::template_to_json(t));
  }
  return arr.dump(2) + "\n";
}

}  // namespace injectprobe
