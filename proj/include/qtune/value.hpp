#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include <json.hpp>

namespace qtune {

/// A single parameter value: integer, float, or categorical label.
using Value = std::variant<std::int64_t, double, std::string>;

inline bool value_is_numeric(const Value& v) {
  return !std::holds_alternative<std::string>(v);
}

inline bool value_is_string(const Value& v) { return std::holds_alternative<std::string>(v); }

inline double value_as_double(const Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return static_cast<double>(std::get<std::int64_t>(v));
  return std::get<double>(v);
}

/// Numeric values compare by magnitude (3 == 3.0); strings compare exactly.
bool value_equal(const Value& a, const Value& b);

nlohmann::ordered_json value_to_json(const Value& v);
Value value_from_json(const nlohmann::json& j);
Value value_from_json(const nlohmann::ordered_json& j);

/// Deterministic rendering used in prompts and logs (shortest round-trip form).
std::string value_to_string(const Value& v);

std::string format_double(double v);

}  // namespace qtune
