#pragma once

// JSON run configuration: the published schema, a validator for the subset
// of JSON Schema it uses, and conversion to library types.

#include "koopman/core.hpp"
#include "koopman/flow.hpp"
#include "koopman/systems.hpp"

#include <json.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace koopman {

inline constexpr const char* kRunConfigSchema = R"json({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "koopman run configuration",
  "type": "object",
  "additionalProperties": false,
  "properties": {
    "system": {
      "oneOf": [
        {"type": "string", "enum": ["example1", "example2", "duffing", "twolink"]},
        {
          "type": "object",
          "required": ["dim", "equations"],
          "additionalProperties": false,
          "properties": {
            "name": {"type": "string"},
            "dim": {"type": "integer", "minimum": 1},
            "equations": {
              "type": "array",
              "items": {
                "type": "array",
                "items": {
                  "type": "object",
                  "required": ["c", "e"],
                  "additionalProperties": false,
                  "properties": {
                    "c": {"type": "number"},
                    "e": {"type": "array", "items": {"type": "integer", "minimum": 0}}
                  }
                }
              }
            },
            "domain": {
              "type": "array",
              "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
            }
          }
        }
      ]
    },
    "params": {"type": "object", "additionalProperties": {"type": "number"}},
    "equilibrium_guess": {"type": "array", "items": {"type": "number"}, "minItems": 1},
    "lambda_index": {"type": "integer", "minimum": 0},
    "integrator": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "rtol": {"type": "number", "exclusiveMinimum": 0},
        "atol": {"type": "number", "exclusiveMinimum": 0},
        "h_init": {"type": "number", "exclusiveMinimum": 0},
        "h_max": {"type": "number", "exclusiveMinimum": 0},
        "T_min": {"type": "number", "exclusiveMinimum": 0},
        "T_max": {"type": "number", "exclusiveMinimum": 0},
        "tail_tol": {"type": "number", "exclusiveMinimum": 0},
        "escape_radius": {"type": "number", "exclusiveMinimum": 0},
        "convergence_radius": {"type": "number", "exclusiveMinimum": 0},
        "escape_tail_tol": {"type": "number", "minimum": 0}
      }
    },
    "grid": {"type": "string"},
    "fixed": {"type": "object", "additionalProperties": {"type": "number"}},
    "level": {"type": "number"},
    "part": {"type": "string", "enum": ["real", "imag", "magnitude"]},
    "refine": {"type": "boolean"},
    "points": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    "domain": {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}},
    "count": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "workers": {"type": "integer", "minimum": 0},
    "output": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "path": {"type": "string"},
        "format": {"type": "string", "enum": ["csv", "json"]}
      }
    }
  }
})json";

inline const nlohmann::json& run_config_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(kRunConfigSchema);
  return schema;
}

namespace detail {

inline bool matches_type(const nlohmann::json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "null") return v.is_null();
  return false;
}

inline void collect_schema_errors(const nlohmann::json& v, const nlohmann::json& s, const std::string& path,
                                  std::vector<std::string>& errors) {
  const std::string where = path.empty() ? "<root>" : path;
  if (s.is_boolean()) {
    if (!s.get<bool>()) errors.push_back(where + ": not allowed");
    return;
  }
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || matches_type(v, t.get<std::string>());
    } else {
      ok = matches_type(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(where + ": expected type " + s["type"].dump());
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errors.push_back(where + ": value " + v.dump() + " not in " + s["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (s.contains("minimum") && x < s["minimum"].get<double>()) {
      errors.push_back(where + ": must be >= " + s["minimum"].dump());
    }
    if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>())) {
      errors.push_back(where + ": must be > " + s["exclusiveMinimum"].dump());
    }
  }
  if (v.is_object()) {
    if (s.contains("required")) {
      for (const auto& r : s["required"]) {
        if (!v.contains(r.get<std::string>())) errors.push_back(where + ": missing required key '" + r.get<std::string>() + "'");
      }
    }
    for (const auto& [k, child] : v.items()) {
      const std::string cpath = path.empty() ? k : path + "." + k;
      if (s.contains("properties") && s["properties"].contains(k)) {
        collect_schema_errors(child, s["properties"][k], cpath, errors);
      } else if (s.contains("additionalProperties")) {
        const auto& extra = s["additionalProperties"];
        if (extra.is_boolean()) {
          if (!extra.get<bool>()) errors.push_back(cpath + ": unknown key");
        } else {
          collect_schema_errors(child, extra, cpath, errors);
        }
      }
    }
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
      errors.push_back(where + ": expected at least " + s["minItems"].dump() + " items");
    }
    if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) {
      errors.push_back(where + ": expected at most " + s["maxItems"].dump() + " items");
    }
    if (s.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        collect_schema_errors(v[i], s["items"], path + "[" + std::to_string(i) + "]", errors);
      }
    }
  }
  if (s.contains("oneOf")) {
    std::size_t matched = 0;
    for (const auto& alt : s["oneOf"]) {
      std::vector<std::string> sub;
      collect_schema_errors(v, alt, path, sub);
      matched += sub.empty() ? 1 : 0;
    }
    if (matched != 1) errors.push_back(where + ": must match exactly one allowed form");
  }
}

}  // namespace detail

/// Schema violations, one message per problem; empty when valid.
inline std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema = run_config_schema()) {
  std::vector<std::string> errors;
  detail::collect_schema_errors(doc, schema, "", errors);
  return errors;
}

inline void validate_run_config(const nlohmann::json& doc) {
  const auto errors = schema_errors(doc);
  if (errors.empty()) return;
  std::string msg = "config does not match the schema:";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ConfigError(msg);
}

inline nlohmann::json to_json(const IntegratorConfig& c) {
  return {{"rtol", c.rtol},
          {"atol", c.atol},
          {"h_init", c.h_init},
          {"h_max", c.h_max},
          {"T_min", c.T_min},
          {"T_max", c.T_max},
          {"tail_tol", c.tail_tol},
          {"escape_radius", c.escape_radius},
          {"convergence_radius", c.convergence_radius},
          {"escape_tail_tol", c.escape_tail_tol}};
}

/// Missing keys keep their defaults from `base`.
inline IntegratorConfig integrator_from_json(const nlohmann::json& j, IntegratorConfig base = {}) {
  if (!j.is_object()) throw ConfigError("integrator: expected an object");
  auto read = [&](const char* key, double& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("integrator.") + key + ": expected a number");
    dst = j[key].get<double>();
  };
  for (const auto& [k, v] : j.items()) {
    static const std::vector<std::string> known{"rtol",   "atol",     "h_init",        "h_max",
                                                "T_min",  "T_max",    "tail_tol",      "escape_radius",
                                                "convergence_radius", "escape_tail_tol"};
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("integrator." + k + ": unknown key");
  }
  read("rtol", base.rtol);
  read("atol", base.atol);
  read("h_init", base.h_init);
  read("h_max", base.h_max);
  read("T_min", base.T_min);
  read("T_max", base.T_max);
  read("tail_tol", base.tail_tol);
  read("escape_radius", base.escape_radius);
  read("convergence_radius", base.convergence_radius);
  read("escape_tail_tol", base.escape_tail_tol);
  base.validate();
  return base;
}

/// Builds the system named or described by a run config's "system" and
/// "params" entries.
inline SystemInstance system_from_config(const nlohmann::json& doc) {
  if (!doc.contains("system")) throw ConfigError("config: 'system' is required");
  const auto& s = doc["system"];
  if (s.is_object()) {
    if (doc.contains("params") && !doc["params"].empty()) {
      throw ConfigError("config: 'params' applies to builtin systems only");
    }
    return parse_polynomial(s);
  }
  ParamMap params;
  if (doc.contains("params")) {
    for (const auto& [k, v] : doc["params"].items()) params[k] = v.get<double>();
  }
  return builtin(s.get<std::string>(), params);
}

}  // namespace koopman
