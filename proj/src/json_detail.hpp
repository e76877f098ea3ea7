#pragma once

// Internal JSON helpers shared by the config/catalog loaders. Strict by
// design: unknown keys and type mismatches raise SchemaError with the path
// of the offending field.

#include <json.hpp>

#include <initializer_list>
#include <string>

#include "injectprobe/errors.hpp"
#include "injectprobe/prompt.hpp"

namespace injectprobe::detail {

using nlohmann::json;

void require_object(const json& value, const std::string& path);
void require_array(const json& value, const std::string& path);

/// Rejects keys of `obj` that are in neither `required` nor `optional`;
/// requires every `required` key to be present.
void check_keys(const json& obj, std::initializer_list<const char*> required,
                std::initializer_list<const char*> optional,
                const std::string& path);

std::string require_string(const json& obj, const char* key,
                           const std::string& path);
double require_number(const json& obj, const char* key, const std::string& path);
long long require_integer(const json& obj, const char* key,
                          const std::string& path);

std::string trim_copy(const std::string& s);

PromptTemplate template_from_json(const json& obj, const std::string& path);
json template_to_json(const PromptTemplate& t);

}  // namespace injectprobe::detail
