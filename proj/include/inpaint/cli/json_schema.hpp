#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace inpaint::cli {

/// Validates `instance` against a JSON Schema using the keywords this
/// project's schemas need: type, properties, required, additionalProperties
/// (boolean), items, enum, const, minimum, maximum, exclusiveMinimum,
/// exclusiveMaximum, minItems, maxItems, minLength, $ref to "#/$defs/...".
/// Returns one message per violation, each prefixed with a JSON pointer.
std::vector<std::string> validate_schema(const nlohmann::json &instance,
                                         const nlohmann::json &schema);

} // namespace inpaint::cli
