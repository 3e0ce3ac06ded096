#include "inpaint/cli/json_schema.hpp"

#include <cmath>

namespace inpaint::cli {

using nlohmann::json;

namespace {

bool has_type(const json &v, const std::string &type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  if (type == "number") return v.is_number();
  if (type == "integer") {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
      const double d = v.get<double>();
      return std::isfinite(d) && d == std::floor(d);
    }
    return false;
  }
  return false;
}

struct Validator {
  const json &root;
  std::vector<std::string> errors;

  const json &resolve(const json &schema) {
    if (schema.is_object() && schema.contains("$ref")) {
      const std::string ref = schema["$ref"].get<std::string>();
      const std::string prefix = "#/";
      if (ref.rfind(prefix, 0) != 0) {
        errors.push_back("unsupported $ref " + ref);
        return schema;
      }
      return root.at(json::json_pointer(ref.substr(1)));
    }
    return schema;
  }

  void check(const json &v, const json &raw_schema, const std::string &at) {
    const json &s = resolve(raw_schema);
    if (!s.is_object()) return;
    const std::string where = at.empty() ? "/" : at;
    if (auto it = s.find("type"); it != s.end()) {
      bool ok = false;
      if (it->is_string()) {
        ok = has_type(v, it->get<std::string>());
      } else {
        for (const auto &t : *it) ok = ok || has_type(v, t.get<std::string>());
      }
      if (!ok) {
        errors.push_back(where + ": expected type " + it->dump());
        return;
      }
    }
    if (auto it = s.find("enum"); it != s.end()) {
      bool ok = false;
      for (const auto &e : *it) ok = ok || e == v;
      if (!ok) errors.push_back(where + ": value " + v.dump() + " not in " + it->dump());
    }
    if (auto it = s.find("const"); it != s.end() && *it != v) {
      errors.push_back(where + ": expected " + it->dump());
    }
    if (v.is_number()) {
      const double d = v.get<double>();
      if (auto it = s.find("minimum"); it != s.end() && d < it->get<double>()) {
        errors.push_back(where + ": below minimum " + it->dump());
      }
      if (auto it = s.find("maximum"); it != s.end() && d > it->get<double>()) {
        errors.push_back(where + ": above maximum " + it->dump());
      }
      if (auto it = s.find("exclusiveMinimum"); it != s.end() && d <= it->get<double>()) {
        errors.push_back(where + ": must exceed " + it->dump());
      }
      if (auto it = s.find("exclusiveMaximum"); it != s.end() && d >= it->get<double>()) {
        errors.push_back(where + ": must be below " + it->dump());
      }
    }
    if (v.is_string()) {
      if (auto it = s.find("minLength");
          it != s.end() && v.get<std::string>().size() < it->get<std::size_t>()) {
        errors.push_back(where + ": shorter than " + it->dump());
      }
    }
    if (v.is_array()) {
      if (auto it = s.find("minItems"); it != s.end() && v.size() < it->get<std::size_t>()) {
        errors.push_back(where + ": fewer than " + it->dump() + " items");
      }
      if (auto it = s.find("maxItems"); it != s.end() && v.size() > it->get<std::size_t>()) {
        errors.push_back(where + ": more than " + it->dump() + " items");
      }
      if (auto it = s.find("items"); it != s.end()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          check(v[i], *it, at + "/" + std::to_string(i));
        }
      }
    }
    if (v.is_object()) {
      if (auto it = s.find("required"); it != s.end()) {
        for (const auto &k : *it) {
          if (!v.contains(k.get<std::string>())) {
            errors.push_back(where + ": missing required property " + k.dump());
          }
        }
      }
      const json *props = s.contains("properties") ? &s["properties"] : nullptr;
      for (auto kv = v.begin(); kv != v.end(); ++kv) {
        if (props != nullptr && props->contains(kv.key())) {
          check(kv.value(), (*props)[kv.key()], at + "/" + kv.key());
        } else if (auto ap = s.find("additionalProperties"); ap != s.end()) {
          if (ap->is_boolean() && !ap->get<bool>()) {
            errors.push_back(where + ": unknown property \"" + kv.key() + "\"");
          } else if (ap->is_object()) {
            check(kv.value(), *ap, at + "/" + kv.key());
          }
        }
      }
    }
  }
};

} // namespace

std::vector<std::string> validate_schema(const json &instance, const json &schema) {
  Validator v{schema, {}};
  v.check(instance, schema, "");
  return v.errors;
}

} // namespace inpaint::cli
