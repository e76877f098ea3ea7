#include "injectprobe/dataset.hpp"

#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include "injectprobe/errors.hpp"
#include "json_detail.hpp"

namespace injectprobe {

namespace {

using ordered_json = nlohmann::ordered_json;

/// RFC-4180 CSV reader: quoted fields, "" escapes, newlines inside quotes.
std::vector<std::vector<std::string>> parse_csv(const std::string& content,
                                                const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;

  const auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  const auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) {
          throw ParseError(path + ": unexpected quote mid-field");
        }
        in_quotes = true;
        field_was_quoted = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;  // swallow; the following \n ends the row
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
    }
  }
  if (in_quotes) {
    throw ParseError(path + ": unterminated quoted field");
  }
  if (!field.empty() || !row.empty() || field_was_quoted) {
    end_row();
  }
  return rows;
}

}  // namespace

std::vector<TaskPair> load_task_pairs_csv(const std::string& path,
                                          TaskKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw StorageError("cannot open corpus file: " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto rows = parse_csv(buffer.str(), path);

  if (rows.empty() || rows[0].size() != 2 || rows[0][0] != "input" ||
      rows[0][1] != "target") {
    throw SchemaError(path, "expected CSV header 'input,target'");
  }

  std::vector<TaskPair> pairs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() == 1 && rows[i][0].empty()) {
      continue;  // blank line
    }
    if (rows[i].size() != 2) {
      throw SchemaError(path + ":row " + std::to_string(i + 1),
                        "expected exactly 2 columns");
    }
    TaskPair p;
    p.task_kind = kind;
    p.input_text = rows[i][0];
    p.target_text = rows[i][1];
    if (detail::trim_copy(p.input_text).empty() ||
        detail::trim_copy(p.target_text).empty()) {
      throw SchemaError(path + ":row " + std::to_string(i + 1),
                        "input and target must be nonempty");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string grammar_fix(const std::string& text) {
  std::string s = detail::trim_copy(text);
  if (s.empty()) return s;

  while (!s.empty() && (s.back() == ':' || s.back() == ';' || s.back() == ',')) {
    s.pop_back();
    s = detail::trim_copy(s);
  }
  if (s.empty()) return s;

  const auto is_terminal = [](char c) {
    return c == '.' || c == '!' || c == '?';
  };
  const char last = s.back();
  if (is_terminal(last)) {
    // already a sentence
  } else if (last == '\'' || last == '"') {
    if (s.size() < 2 || !is_terminal(s[s.size() - 2])) {
      s.insert(s.size() - 1, 1, '.');
    }
  } else {
    s.push_back('.');
  }

  for (char& c : s) {
    if (std::isalpha(static_cast<unsigned char>(c)) != 0) {
      c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      break;
    }
    if (std::isspace(static_cast<unsigned char>(c)) == 0 && c != '\'' &&
        c != '"') {
      break;  // starts with a non-letter symbol; leave it alone
    }
  }
  return s;
}

namespace {

std::string safe_completion(const TaskPair& pair, const AttackString& attack) {
  switch (pair.task_kind) {
    case TaskKind::grammar_correction:
      // The attack text is corrected like any other input and appended.
      return pair.target_text + " " + grammar_fix(attack.text);
    case TaskKind::sentiment:
      // The label covers the whole text, attack included.
      return pair.target_text;
    default:
      // Carried through the task output as data.
      return pair.target_text + " " + attack.text;
  }
}

}  // namespace

std::vector<FineTuneExample> build_finetune_dataset(
    const std::vector<TaskPair>& pairs, const TemplateCatalog& templates,
    const AttackCatalog& attacks, double injection_rate, std::uint64_t seed) {
  if (injection_rate < 0.0 || injection_rate > 1.0) {
    throw SchemaError("injection_rate", "must be in [0, 1]");
  }

  std::mt19937_64 rng(seed);
  // Explicit arithmetic instead of std distributions: identical streams on
  // every platform.
  const auto next_unit = [&rng] {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };

  std::vector<FineTuneExample> examples;
  examples.reserve(pairs.size());
  for (const TaskPair& pair : pairs) {
    if (detail::trim_copy(pair.input_text).empty() ||
        detail::trim_copy(pair.target_text).empty()) {
      throw SchemaError("pairs", "input and target must be nonempty");
    }

    const PromptTemplate* tmpl = nullptr;
    for (const PromptTemplate& t : templates.items()) {
      if (t.task_kind == pair.task_kind) {
        tmpl = &t;
        break;
      }
    }
    if (tmpl == nullptr) {
      throw MissingTemplate("no template for task kind '" +
                            std::string(to_string(pair.task_kind)) + "'");
    }

    const bool adversarial = next_unit() < injection_rate;
    const AttackString* attack = nullptr;
    std::string user_text = pair.input_text;
    if (adversarial) {
      if (attacks.items().empty()) {
        throw EmptyFactor("attacks: cannot inject from an empty catalog");
      }
      attack = &attacks.items()[rng() % attacks.items().size()];
      user_text += " " + attack->text;
    }

    FineTuneExample example;
    example.prompt = render(*tmpl, user_text, DelimiterMode::tagged).text;
    example.completion =
        adversarial ? safe_completion(pair, *attack) : pair.target_text;
    example.adversarial = adversarial;
    example.template_id = tmpl->id;
    if (attack != nullptr) example.attack_id = attack->id;
    examples.push_back(std::move(example));
  }
  return examples;
}

std::size_t emit_jsonl(const std::vector<FineTuneExample>& examples,
                       const std::string& path,
                       const std::string& completion_prefix,
                       const std::string& completion_suffix) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) {
    throw StorageError("cannot open output file: " + path);
  }
  std::size_t count = 0;
  for (const FineTuneExample& e : examples) {
    ordered_json line;
    line["prompt"] = e.prompt;
    line["completion"] = completion_prefix + e.completion + completion_suffix;
    out << line.dump() << "\n";
    ++count;
  }
  if (!out.good()) {
    throw StorageError("write failed: " + path);
  }
  return count;
}

std::vector<RLExample> build_rl_dataset(const std::vector<RunRecord>& run) {
  std::vector<RLExample> examples;
  examples.reserve(run.size());
  for (std::size_t i = 0; i < run.size(); ++i) {
    const RunRecord& r = run[i];
    const std::string& id = r.attack_case.case_id;
    if (r.prompt.case_id != id || r.completion.case_id != id ||
        r.score.case_id != id) {
      throw InconsistentRecord("record " + std::to_string(i) +
                               ": case_id mismatch across fields");
    }
    RLExample e;
    e.prompt = r.prompt.text;
    e.completion = r.completion.text;
    e.reward = r.score.success ? -100 : 100;
    examples.push_back(std::move(e));
  }
  return examples;
}

std::size_t emit_rl_jsonl(const std::vector<RLExample>& examples,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) {
    throw StorageError("cannot open output file: " + path);
  }
  std::size_t count = 0;
  for (const RLExample& e : examples) {
    ordered_json line;
    line["prompt"] = e.prompt;
    line["completion"] = e.completion;
    line["reward"] = e.reward;
    out << line.dump() << "\n";
    ++count;
  }
  if (!out.good()) {
    throw StorageError("write failed: " + path);
  }
  return count;
}

}  // namespace injectprobe
