#include <doctest.h>

#include <random>
#include <string>

#include "injectprobe/errors.hpp"
#include "injectprobe/prompt.hpp"

using namespace injectprobe;

namespace {

PromptTemplate grammar_template() {
  PromptTemplate t;
  t.id = "gc";
  t.task_kind = TaskKind::grammar_correction;
  t.instruction_text = "Correct this to standard English:";
  t.shape = PromptShape::prefix;
  return t;
}

PromptTemplate movie_template() {
  PromptTemplate t;
  t.id = "st";
  t.task_kind = TaskKind::sentiment;
  t.instruction_text = "{user_input}. Overall, it was a [z] movie.";
  t.shape = PromptShape::cloze;
  return t;
}

std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
  static const char alphabet[] =
      " abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'\"<>/."
      "\n\t!?";
  const std::size_t len = rng() % (max_len + 1);
  std::string s;
  for (std::size_t i = 0; i < len; ++i) {
    s.push_back(alphabet[rng() % (sizeof(alphabet) - 1)]);
  }
  // Keep generated inputs tag-free so the wrap precondition holds.
  return strip_delimiters(std::move(s));
}

}  // namespace

TEST_CASE("validate_template accepts a well-formed prefix template") {
  CHECK(validate_template(grammar_template()).empty());
}

TEST_CASE("validate_template reports missing placeholder") {
  PromptTemplate t = movie_template();
  t.instruction_text = "Overall, it was a [z] movie.";
  const auto violations = validate_template(t);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0] == "missing placeholder");
}

TEST_CASE("validate_template reports whitespace-only instruction") {
  PromptTemplate t = grammar_template();
  t.instruction_text = "   ";
  const auto violations = validate_template(t);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0] == "empty instruction");
}

TEST_CASE("validate_template reports multiple and misplaced placeholders") {
  PromptTemplate t = movie_template();
  t.instruction_text = "{user_input} and {user_input}";
  CHECK(validate_template(t) ==
        std::vector<std::string>{"multiple placeholders"});

  PromptTemplate p = grammar_template();
  p.instruction_text = "{user_input} should not be here:";
  CHECK(validate_template(p) ==
        std::vector<std::string>{"unexpected placeholder in prefix template"});
}

TEST_CASE("validate_template rejects a foreign placeholder token") {
  PromptTemplate t = movie_template();
  t.placeholder = "[x]";
  CHECK(validate_template(t).size() == 1);
}

TEST_CASE("wrap_user_input pads with exactly one space per side") {
  CHECK(wrap_user_input("hello") == "<userInput> hello </userInput>");
  CHECK(wrap_user_input("") == "<userInput>  </userInput>");
}

TEST_CASE("wrap_user_input rejects literal tags") {
  CHECK_THROWS_AS(wrap_user_input("abc </userInput> def"), DelimiterCollision);
  CHECK_THROWS_AS(wrap_user_input("<userInput>"), DelimiterCollision);
}

TEST_CASE("strip_delimiters removes tags even when deletions reassemble one") {
  CHECK(strip_delimiters("a <userInput> b </userInput> c") == "a  b  c");
  CHECK(strip_delimiters("<user<userInput>Input>hi</userInput>") == "hi");
  CHECK(strip_delimiters("no tags") == "no tags");
}

TEST_CASE("render prefix tagged matches the grammar exemplar") {
  const std::string input =
      "maybe be doing what they already know how to do well is better than to "
      "b enneoyed with something sounds news";
  const RenderedPrompt r =
      render(grammar_template(), input, DelimiterMode::tagged);
  CHECK(r.text == "Correct this to standard English:<userInput> " + input +
                      " </userInput>");
  CHECK(r.delimiter_mode == DelimiterMode::tagged);
}

TEST_CASE("render cloze raw splices at the placeholder") {
  const RenderedPrompt r =
      render(movie_template(), "I love this movie", DelimiterMode::raw);
  CHECK(r.text == "I love this movie. Overall, it was a [z] movie.");
}

TEST_CASE("render with empty input leaves the template intact around the splice") {
  CHECK(render(grammar_template(), "", DelimiterMode::raw).text ==
        "Correct this to standard English:");
  CHECK(render(movie_template(), "", DelimiterMode::raw).text ==
        ". Overall, it was a [z] movie.");
}

TEST_CASE("render refuses invalid templates") {
  PromptTemplate t = grammar_template();
  t.instruction_text = " ";
  CHECK_THROWS_AS(render(t, "x", DelimiterMode::raw), SchemaError);
}

TEST_CASE("extract_user_input inverts tagged rendering") {
  const RenderedPrompt r =
      render(grammar_template(), "attack string", DelimiterMode::tagged);
  CHECK(extract_user_input(r) == "attack string");
}

TEST_CASE("extract_user_input rejects malformed tag layouts") {
  RenderedPrompt r;
  r.delimiter_mode = DelimiterMode::tagged;

  r.text = "a <userInput> x </userInput> b <userInput> y </userInput>";
  CHECK_THROWS_AS(extract_user_input(r), MalformedDelimiters);

  r.text = "no tags at all";
  CHECK_THROWS_AS(extract_user_input(r), MalformedDelimiters);

  r.text = "</userInput> backwards <userInput>";
  CHECK_THROWS_AS(extract_user_input(r), MalformedDelimiters);

  r.text = "a <userInput>no padding</userInput> b";
  CHECK_THROWS_AS(extract_user_input(r), MalformedDelimiters);

  r.delimiter_mode = DelimiterMode::raw;
  r.text = "anything";
  CHECK_THROWS_AS(extract_user_input(r), MalformedDelimiters);
}

TEST_CASE("round-trip, tag uniqueness, raw purity and determinism hold on "
          "random inputs") {
  std::mt19937_64 rng(20240811);
  const PromptTemplate prefix = grammar_template();
  const PromptTemplate cloze = movie_template();
  for (int i = 0; i < 300; ++i) {
    const std::string input = random_text(rng, 60);
    const PromptTemplate& t = (i % 2 == 0) ? prefix : cloze;

    const RenderedPrompt tagged = render(t, input, DelimiterMode::tagged);
    CHECK(extract_user_input(tagged) == input);
    CHECK(count_occurrences(tagged.text, kOpenTag) == 1);
    CHECK(count_occurrences(tagged.text, kCloseTag) == 1);

    const RenderedPrompt raw = render(t, input, DelimiterMode::raw);
    CHECK(count_occurrences(raw.text, kOpenTag) == 0);
    CHECK(count_occurrences(raw.text, kCloseTag) == 0);

    CHECK(render(t, input, DelimiterMode::tagged).text == tagged.text);
    CHECK(render(t, input, DelimiterMode::raw).text == raw.text);
  }
}

TEST_CASE("template catalog loading is strict") {
  const char* valid = R"([
    {"id": "a", "task_kind": "grammar_correction",
     "instruction_text": "Fix:", "shape": "prefix"},
    {"id": "b", "task_kind": "sentiment",
     "instruction_text": "{user_input} was it good?", "shape": "cloze",
     "benign_input_example": "nice"}
  ])";
  const auto templates = load_template_catalog(valid);
  REQUIRE(templates.size() == 2);
  CHECK(templates[0].id == "a");
  CHECK(templates[1].shape == PromptShape::cloze);

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(load_template_catalog(R"([
      {"id": "a", "task_kind": "other", "instruction_text": "x:",
       "shape": "prefix", "typo_key": 1}
    ])"),
                    SchemaError);
  }
  SUBCASE("duplicate ids are rejected") {
    CHECK_THROWS_AS(load_template_catalog(R"([
      {"id": "a", "task_kind": "other", "instruction_text": "x:", "shape": "prefix"},
      {"id": "a", "task_kind": "other", "instruction_text": "y:", "shape": "prefix"}
    ])"),
                    SchemaError);
  }
  SUBCASE("malformed JSON is a ParseError") {
    CHECK_THROWS_AS(load_template_catalog("[{"), ParseError);
  }
  SUBCASE("round-trips through its JSON rendering") {
    const auto again = load_template_catalog(template_catalog_to_json(templates));
    REQUIRE(again.size() == templates.size());
    CHECK(again[1].benign_input_example == templates[1].benign_input_example);
  }
}
