#include "qtune/value.hpp"

#include <cmath>

#include "qtune/errors.hpp"

namespace qtune {

bool value_equal(const Value& a, const Value& b) {
  if (value_is_string(a) != value_is_string(b)) return false;
  if (value_is_string(a)) return std::get<std::string>(a) == std::get<std::string>(b);
  return value_as_double(a) == value_as_double(b);
}

nlohmann::ordered_json value_to_json(const Value& v) {
  if (std::holds_alternative<std::int64_t>(v)) return std::get<std::int64_t>(v);
  if (std::holds_alternative<double>(v)) return std::get<double>(v);
  return std::get<std::string>(v);
}

namespace {
template <typename Json>
Value from_json_impl(const Json& j) {
  if (j.is_number_integer()) return j.template get<std::int64_t>();
  if (j.is_number_float()) return j.template get<double>();
  if (j.is_string()) return j.template get<std::string>();
  if (j.is_boolean()) return std::string(j.template get<bool>() ? "true" : "false");
  throw SchemaError("value must be a number or string, got: " + j.dump());
}
}  // namespace

Value value_from_json(const nlohmann::json& j) { return from_json_impl(j); }
Value value_from_json(const nlohmann::ordered_json& j) { return from_json_impl(j); }

std::string value_to_string(const Value& v) { return value_to_json(v).dump(); }

std::string format_double(double v) { return nlohmann::ordered_json(v).dump(); }

}  // namespace qtune
