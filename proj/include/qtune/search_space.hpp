#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qtune/errors.hpp"
#include "qtune/value.hpp"

namespace qtune::space {

enum class ParamKind { UniformFloat, UniformInt, Categorical };

std::string param_kind_name(ParamKind kind);
ParamKind param_kind_from_name(const std::string& name);

/// One typed search dimension: numeric range or ordered categorical choices.
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::UniformFloat;
  double lower = 0.0;
  double upper = 0.0;
  Value default_value;
  bool log_scale = false;
  std::vector<Value> choices;
  std::string description;  // optional, used verbatim in prompts

  /// Throws InvariantError naming this parameter when a declaration is inconsistent.
  void check() const;
};

/// A named configuration: ordered (name, value) assignments over one space.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::string space_name) : space_name_(std::move(space_name)) {}

  const std::string& space_name() const { return space_name_; }
  void set_space_name(std::string n) { space_name_ = std::move(n); }

  /// Inserts or overwrites; first insertion fixes the rendering order.
  void set(const std::string& name, Value v);
  const Value* find(const std::string& name) const;
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  const std::vector<std::pair<std::string, Value>>& items() const { return items_; }
  bool empty() const { return items_.empty(); }
  std::size_t size() const { return items_.size(); }

  nlohmann::ordered_json to_json() const;
  std::string to_json_string() const { return to_json().dump(); }
  static Configuration from_json(const nlohmann::ordered_json& j, std::string space_name = "");

  /// Content equality, insensitive to assignment order.
  bool operator==(const Configuration& other) const;
  bool operator!=(const Configuration& other) const { return !(*this == other); }

 private:
  std::string space_name_;
  std::vector<std::pair<std::string, Value>> items_;
};

class SearchSpace {
 public:
  SearchSpace() = default;
  SearchSpace(std::string name, std::vector<ParamSpec> params);

  const std::string& name() const { return name_; }
  const std::vector<ParamSpec>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  const ParamSpec* find(const std::string& param_name) const;

  nlohmann::ordered_json to_json() const;

 private:
  std::string name_;
  std::vector<ParamSpec> params_;
};

/// Parses a space document. Throws SchemaError on malformed input and
/// InvariantError (naming the parameter) on inconsistent declarations.
SearchSpace load_space_doc(const nlohmann::ordered_json& doc);
SearchSpace load_space(const std::string& text);
SearchSpace load_space_file(const std::string& path);

enum class ViolationKind { UnknownParameter, MissingParameter, TypeMismatch, OutOfRange };

std::string violation_kind_name(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string param;
  std::string observed;  // rendered offending value, empty for missing params

  std::string to_string() const;
};

struct ValidationResult {
  std::vector<Violation> violations;
  bool valid() const { return violations.empty(); }
  bool has(ViolationKind kind) const;
};

/// Violations are data, not faults: never throws.
/// Non-integral numeric values for integer parameters are OutOfRange (the
/// integer lattice is the declared domain); non-numeric values for numeric
/// parameters are TypeMismatch. Categorical values outside the choice list
/// are OutOfRange.
ValidationResult validate(const SearchSpace& space, const Configuration& config);

Configuration default_config(const SearchSpace& space);

/// Repairs a type-correct configuration: numeric values are projected onto
/// [lower, upper] (integers rounded to nearest first), missing parameters take
/// their defaults, unknown keys are dropped. Throws UnclampableError when a
/// categorical value is not among the declared choices.
Configuration clamp(const SearchSpace& space, const Configuration& config);

/// Uniform sampling; log-scale parameters sample uniformly in log-domain.
/// Deterministic for a given seed, and the result always validates.
Configuration sample(const SearchSpace& space, std::uint64_t rng_seed);

/// Maps a configuration onto [0,1]^d in declaration order (log-domain for
/// log-scale params, choice index for categoricals).
std::vector<double> normalize(const SearchSpace& space, const Configuration& config);

/// Inverse of normalize; coordinates are clamped to [0,1] first.
Configuration denormalize(const SearchSpace& space, const std::vector<double>& unit);

/// splitmix64; used everywhere a stream of per-round seeds is derived.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace qtune::space
