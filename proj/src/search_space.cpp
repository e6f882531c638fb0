#include "qtune/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace qtune::space {

std::string param_kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::UniformFloat: return "uniform-float";
    case ParamKind::UniformInt: return "uniform-int";
    case ParamKind::Categorical: return "categorical";
  }
  return "?";
}

ParamKind param_kind_from_name(const std::string& name) {
  if (name == "uniform-float") return ParamKind::UniformFloat;
  if (name == "uniform-int") return ParamKind::UniformInt;
  if (name == "categorical") return ParamKind::Categorical;
  throw SchemaError("unknown parameter kind: '" + name + "'");
}

void ParamSpec::check() const {
  if (name.empty()) throw InvariantError(name, "parameter with empty name");
  if (kind == ParamKind::Categorical) {
    if (choices.empty())
      throw InvariantError(name, "categorical parameter '" + name + "' has no choices");
    bool found = false;
    for (const auto& c : choices)
      if (value_equal(c, default_value)) found = true;
    if (!found)
      throw InvariantError(name, "default of categorical parameter '" + name +
                                     "' is not among its choices");
    if (log_scale)
      throw InvariantError(name, "categorical parameter '" + name + "' cannot be log-scale");
    return;
  }
  if (!(lower < upper))
    throw InvariantError(name, "parameter '" + name + "' has lower >= upper (" +
                                   format_double(lower) + " >= " + format_double(upper) + ")");
  if (log_scale && !(lower > 0.0))
    throw InvariantError(name, "log-scale parameter '" + name + "' requires lower > 0");
  if (!value_is_numeric(default_value))
    throw InvariantError(name, "numeric parameter '" + name + "' has a non-numeric default");
  const double d = value_as_double(default_value);
  if (d < lower || d > upper)
    throw InvariantError(name, "default of parameter '" + name + "' is outside [lower, upper]");
  if (kind == ParamKind::UniformInt) {
    if (lower != std::floor(lower) || upper != std::floor(upper))
      throw InvariantError(name, "integer parameter '" + name + "' has non-integer bounds");
    if (d != std::floor(d))
      throw InvariantError(name, "integer parameter '" + name + "' has a non-integer default");
  }
}

void Configuration::set(const std::string& name, Value v) {
  for (auto& [k, val] : items_) {
    if (k == name) {
      val = std::move(v);
      return;
    }
  }
  items_.emplace_back(name, std::move(v));
}

const Value* Configuration::find(const std::string& name) const {
  for (const auto& [k, v] : items_)
    if (k == name) return &v;
  return nullptr;
}

nlohmann::ordered_json Configuration::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : items_) j[k] = value_to_json(v);
  return j;
}

Configuration Configuration::from_json(const nlohmann::ordered_json& j, std::string space_name) {
  if (!j.is_object()) throw SchemaError("configuration must be a JSON object");
  Configuration c(std::move(space_name));
  for (const auto& [k, v] : j.items()) c.set(k, value_from_json(v));
  return c;
}

bool Configuration::operator==(const Configuration& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (const auto& [k, v] : items_) {
    const Value* o = other.find(k);
    if (o == nullptr || !value_equal(v, *o)) return false;
  }
  return true;
}

SearchSpace::SearchSpace(std::string name, std::vector<ParamSpec> params)
    : name_(std::move(name)), params_(std::move(params)) {
  std::set<std::string> seen;
  for (const auto& p : params_) {
    p.check();
    if (!seen.insert(p.name).second)
      throw InvariantError(p.name, "duplicate parameter name '" + p.name + "'");
  }
}

const ParamSpec* SearchSpace::find(const std::string& param_name) const {
  for (const auto& p : params_)
    if (p.name == param_name) return &p;
  return nullptr;
}

nlohmann::ordered_json SearchSpace::to_json() const {
  nlohmann::ordered_json doc;
  doc["name"] = name_;
  doc["params"] = nlohmann::ordered_json::array();
  for (const auto& p : params_) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["kind"] = param_kind_name(p.kind);
    if (p.kind == ParamKind::Categorical) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& c : p.choices) arr.push_back(value_to_json(c));
      e["choices"] = arr;
    } else {
      if (p.kind == ParamKind::UniformInt) {
        e["lower"] = static_cast<std::int64_t>(p.lower);
        e["upper"] = static_cast<std::int64_t>(p.upper);
      } else {
        e["lower"] = p.lower;
        e["upper"] = p.upper;
      }
      if (p.log_scale) e["log_scale"] = true;
    }
    e["default"] = value_to_json(p.default_value);
    if (!p.description.empty()) e["description"] = p.description;
    doc["params"].push_back(e);
  }
  return doc;
}

namespace {

double require_number(const nlohmann::ordered_json& e, const char* key, const std::string& pname) {
  if (!e.contains(key) || !e[key].is_number())
    throw SchemaError("parameter '" + pname + "': missing or non-numeric '" + key + "'");
  return e[key].get<double>();
}

}  // namespace

SearchSpace load_space_doc(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) throw SchemaError("space document must be a JSON object");
  if (!doc.contains("name") || !doc["name"].is_string())
    throw SchemaError("space document requires a string 'name'");
  if (!doc.contains("params") || !doc["params"].is_array())
    throw SchemaError("space document requires a 'params' array");

  std::vector<ParamSpec> params;
  for (const auto& e : doc["params"]) {
    if (!e.is_object()) throw SchemaError("each params entry must be an object");
    ParamSpec p;
    if (!e.contains("name") || !e["name"].is_string())
      throw SchemaError("params entry without a string 'name'");
    p.name = e["name"].get<std::string>();
    if (!e.contains("kind") || !e["kind"].is_string())
      throw SchemaError("parameter '" + p.name + "': missing 'kind'");
    p.kind = param_kind_from_name(e["kind"].get<std::string>());
    if (e.contains("description")) p.description = e["description"].get<std::string>();
    if (!e.contains("default"))
      throw SchemaError("parameter '" + p.name + "': missing 'default'");
    p.default_value = value_from_json(e["default"]);

    if (p.kind == ParamKind::Categorical) {
      if (!e.contains("choices") || !e["choices"].is_array())
        throw SchemaError("categorical parameter '" + p.name + "': missing 'choices' array");
      for (const auto& c : e["choices"]) p.choices.push_back(value_from_json(c));
    } else {
      p.lower = require_number(e, "lower", p.name);
      p.upper = require_number(e, "upper", p.name);
      p.log_scale = e.value("log_scale", false);
      if (p.kind == ParamKind::UniformInt) {
        // Integer kinds keep integral values end to end.
        if (e["default"].is_number_float() &&
            e["default"].get<double>() == std::floor(e["default"].get<double>()))
          p.default_value = static_cast<std::int64_t>(e["default"].get<double>());
      } else if (std::holds_alternative<std::int64_t>(p.default_value)) {
        p.default_value = static_cast<double>(std::get<std::int64_t>(p.default_value));
      }
    }
    params.push_back(std::move(p));
  }
  return SearchSpace(doc["name"].get<std::string>(), std::move(params));
}

SearchSpace load_space(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("space document is not valid JSON: ") + e.what());
  }
  return load_space_doc(doc);
}

SearchSpace load_space_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open space file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_space(buf.str());
}

std::string violation_kind_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::UnknownParameter: return "UnknownParameter";
    case ViolationKind::MissingParameter: return "MissingParameter";
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::OutOfRange: return "OutOfRange";
  }
  return "?";
}

std::string Violation::to_string() const {
  std::string s = violation_kind_name(kind) + "(" + param;
  if (!observed.empty()) s += " = " + observed;
  s += ")";
  return s;
}

bool ValidationResult::has(ViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const Violation& v) { return v.kind == kind; });
}

ValidationResult validate(const SearchSpace& space, const Configuration& config) {
  ValidationResult r;
  for (const auto& p : space.params()) {
    const Value* v = config.find(p.name);
    if (v == nullptr) {
      r.violations.push_back({ViolationKind::MissingParameter, p.name, ""});
      continue;
    }
    if (p.kind == ParamKind::Categorical) {
      bool found = false;
      for (const auto& c : p.choices)
        if (value_equal(c, *v)) found = true;
      if (!found)
        r.violations.push_back({ViolationKind::OutOfRange, p.name, value_to_string(*v)});
      continue;
    }
    if (!value_is_numeric(*v)) {
      r.violations.push_back({ViolationKind::TypeMismatch, p.name, value_to_string(*v)});
      continue;
    }
    const double x = value_as_double(*v);
    const bool integral = x == std::floor(x);
    if (p.kind == ParamKind::UniformInt && !integral) {
      r.violations.push_back({ViolationKind::OutOfRange, p.name, value_to_string(*v)});
      continue;
    }
    if (x < p.lower || x > p.upper)
      r.violations.push_back({ViolationKind::OutOfRange, p.name, value_to_string(*v)});
  }
  for (const auto& [k, v] : config.items()) {
    if (space.find(k) == nullptr)
      r.violations.push_back({ViolationKind::UnknownParameter, k, value_to_string(v)});
  }
  return r;
}

Configuration default_config(const SearchSpace& space) {
  Configuration c(space.name());
  for (const auto& p : space.params()) c.set(p.name, p.default_value);
  return c;
}

Configuration clamp(const SearchSpace& space, const Configuration& config) {
  Configuration out(space.name());
  for (const auto& p : space.params()) {
    const Value* v = config.find(p.name);
    if (v == nullptr) {
      out.set(p.name, p.default_value);
      continue;
    }
    if (p.kind == ParamKind::Categorical) {
      bool found = false;
      for (const auto& c : p.choices)
        if (value_equal(c, *v)) found = true;
      if (!found)
        throw UnclampableError("categorical value " + value_to_string(*v) +
                               " is not a declared choice of '" + p.name + "'");
      out.set(p.name, *v);
      continue;
    }
    if (!value_is_numeric(*v))
      throw UnclampableError("non-numeric value " + value_to_string(*v) +
                             " for numeric parameter '" + p.name + "'");
    double x = value_as_double(*v);
    if (p.kind == ParamKind::UniformInt) {
      std::int64_t i = std::llround(x);
      i = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                                 std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), i));
      out.set(p.name, i);
    } else {
      x = std::max(p.lower, std::min(p.upper, x));
      out.set(p.name, x);
    }
  }
  return out;
}

Configuration sample(const SearchSpace& space, std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  Configuration c(space.name());
  for (const auto& p : space.params()) {
    switch (p.kind) {
      case ParamKind::UniformFloat: {
        if (p.log_scale) {
          std::uniform_real_distribution<double> d(std::log(p.lower), std::log(p.upper));
          c.set(p.name, std::exp(d(rng)));
        } else {
          std::uniform_real_distribution<double> d(p.lower, p.upper);
          c.set(p.name, d(rng));
        }
        break;
      }
      case ParamKind::UniformInt: {
        if (p.log_scale) {
          // Continuous log-domain draw, rounded back onto the integer grid.
          std::uniform_real_distribution<double> d(std::log(p.lower), std::log(p.upper));
          std::int64_t i = std::llround(std::exp(d(rng)));
          i = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                                     std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), i));
          c.set(p.name, i);
        } else {
          std::uniform_int_distribution<std::int64_t> d(static_cast<std::int64_t>(p.lower),
                                                        static_cast<std::int64_t>(p.upper));
          c.set(p.name, d(rng));
        }
        break;
      }
      case ParamKind::Categorical: {
        std::uniform_int_distribution<std::size_t> d(0, p.choices.size() - 1);
        c.set(p.name, p.choices[d(rng)]);
        break;
      }
    }
  }
  return c;
}

std::vector<double> normalize(const SearchSpace& space, const Configuration& config) {
  std::vector<double> z;
  z.reserve(space.size());
  for (const auto& p : space.params()) {
    const Value* v = config.find(p.name);
    if (v == nullptr) throw Error("normalize: configuration lacks parameter '" + p.name + "'");
    if (p.kind == ParamKind::Categorical) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < p.choices.size(); ++i)
        if (value_equal(p.choices[i], *v)) idx = i;
      z.push_back(p.choices.size() <= 1 ? 0.0
                                        : static_cast<double>(idx) /
                                              static_cast<double>(p.choices.size() - 1));
      continue;
    }
    double x = value_as_double(*v);
    double lo = p.lower, hi = p.upper;
    if (p.log_scale) {
      x = std::log(x);
      lo = std::log(p.lower);
      hi = std::log(p.upper);
    }
    z.push_back((x - lo) / (hi - lo));
  }
  return z;
}

Configuration denormalize(const SearchSpace& space, const std::vector<double>& unit) {
  if (unit.size() != space.size())
    throw DimensionMismatchError("denormalize: expected " + std::to_string(space.size()) +
                                 " coordinates, got " + std::to_string(unit.size()));
  Configuration c(space.name());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto& p = space.params()[i];
    double t = std::max(0.0, std::min(1.0, unit[i]));
    if (p.kind == ParamKind::Categorical) {
      const auto n = static_cast<double>(p.choices.size() - 1);
      const auto idx = static_cast<std::size_t>(std::llround(t * n));
      c.set(p.name, p.choices[std::min(idx, p.choices.size() - 1)]);
      continue;
    }
    double lo = p.lower, hi = p.upper;
    if (p.log_scale) {
      lo = std::log(p.lower);
      hi = std::log(p.upper);
    }
    double x = lo + t * (hi - lo);
    if (p.log_scale) x = std::exp(x);
    if (p.kind == ParamKind::UniformInt) {
      std::int64_t v = std::llround(x);
      v = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                                 std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), v));
      c.set(p.name, v);
    } else {
      c.set(p.name, std::max(p.lower, std::min(p.upper, x)));
    }
  }
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace qtune::space
