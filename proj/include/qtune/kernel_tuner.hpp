#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/errors.hpp"
#include "qtune/hardware.hpp"
#include "qtune/search_space.hpp"

namespace qtune::kerneltune {

enum class KernelKind { Softmax, Silu, RmsNorm, Rope, MatMul };

std::string kernel_kind_name(KernelKind k);
KernelKind kernel_kind_from_name(const std::string& name);

using Shape4 = std::array<std::int64_t, 4>;
using Dim3 = std::array<std::int64_t, 3>;

/// Kernel identity, tensor shapes, and the shipped default launch parameters.
struct KernelSpec {
  KernelKind kernel = KernelKind::Softmax;
  std::string tensor_type = "float32";
  std::vector<Shape4> src_shapes;
  Shape4 out_shape{1, 1, 1, 1};
  Dim3 default_grid{32, 1, 1};
  Dim3 default_block{64, 1, 1};
  int default_unroll = 2;
  int default_tiling = 1;

  void check() const;  // throws InvariantError on shape/arity problems

  /// Serialization mirroring the prompt JSON ("kernel", "tensor type",
  /// "src0 tensor shape", "default gridDim", ...).
  nlohmann::ordered_json to_prompt_json() const;
  static KernelSpec from_json(const nlohmann::ordered_json& doc);
  static KernelSpec load_file(const std::string& path);

  KernelSpec with_tensor_type(const std::string& t) const {
    KernelSpec s = *this;
    s.tensor_type = t;
    return s;
  }
};

/// One kernel execution configuration: launch dims, tiling, unroll.
/// `code` is carried verbatim for logging and never executed.
struct KernelConfig {
  Dim3 grid{1, 1, 1};
  Dim3 block{1, 1, 1};
  std::int64_t tiling = 1;
  int unroll = 1;
  bool code_changed = false;
  std::string code;

  nlohmann::ordered_json to_json() const;
  static KernelConfig from_json(const nlohmann::ordered_json& doc);

  bool operator==(const KernelConfig& o) const {
    return grid == o.grid && block == o.block && tiling == o.tiling && unroll == o.unroll;
  }
};

/// Throws InvalidConfigError unless: every grid/block component is in
/// [1, 256], tiling is a power of two in [1, 256], unroll is in [1, 16],
/// and block.x * block.y * block.z <= 1024.
void check_kernel_config(const KernelConfig& config);

struct LatencyModelParams {
  double mem_bandwidth_coeff = 2e-5;
  double compute_coeff = 5.0;
  double launch_overhead = 3.0;
  int register_pressure_threshold = 4;
  double unpack_penalty_per_elem = 5e-5;
  int occupancy_block_limit = 256;

  void check() const;
};

/// Deterministic modeled latency in microseconds: launch overhead, a compute
/// term divided by saturating parallelism and unroll gain (with a register
/// pressure penalty past the threshold), a memory term divided by tiling
/// reuse, and a per-element unpack penalty when the tensor precision is
/// emulated on the profile.
double model_latency(const KernelSpec& spec, const KernelConfig& config,
                     const hardware::HardwareProfile& profile, const LatencyModelParams& params);

/// Tunable launch-parameter space for one kernel, with the spec's defaults.
/// block_y/block_z are limited to [1, 2] so every point respects the
/// block-product cap.
space::SearchSpace kernel_config_space(const KernelSpec& spec);

KernelConfig kernel_config_from_assignment(const space::Configuration& c);
space::Configuration assignment_from_kernel_config(const space::SearchSpace& sp,
                                                   const KernelConfig& config);

class KernelStrategy {
 public:
  virtual ~KernelStrategy() = default;
  virtual space::Configuration propose() = 0;
  virtual void observe(const space::Configuration& c, double latency_us) = 0;
};

struct TraceEntry {
  KernelConfig config;
  double latency_us = 0.0;
};

struct TuneResult {
  KernelConfig best;
  double best_latency_us = 0.0;
  double default_latency_us = 0.0;
  std::vector<TraceEntry> trace;
};

/// Evaluates the default configuration as round 0, then budget-1 strategy
/// proposals; the returned configuration never models slower than the default.
TuneResult tune_kernel(const KernelSpec& spec, const hardware::HardwareProfile& profile,
                       const LatencyModelParams& params, int budget, KernelStrategy& strategy);

/// Enumerates a fixed listing in order (cycling if asked beyond the end).
class ExhaustiveStrategy : public KernelStrategy {
 public:
  explicit ExhaustiveStrategy(std::vector<space::Configuration> listing);
  space::Configuration propose() override;
  void observe(const space::Configuration&, double) override {}
  std::size_t size() const { return listing_.size(); }

 private:
  std::vector<space::Configuration> listing_;
  std::size_t next_ = 0;
};

/// Uniform random proposals over the kernel config space.
class RandomStrategy : public KernelStrategy {
 public:
  RandomStrategy(space::SearchSpace sp, std::uint64_t seed);
  space::Configuration propose() override;
  void observe(const space::Configuration&, double) override {}

 private:
  space::SearchSpace space_;
  std::uint64_t seed_;
  std::uint64_t round_ = 0;
};

/// Full cartesian grid over a per-dimension value listing.
std::vector<space::Configuration> cartesian_grid(
    const space::SearchSpace& sp,
    const std::vector<std::pair<std::string, std::vector<Value>>>& axes);

struct PrecisionComparison {
  hardware::QuantScheme faster;
  double ratio = 1.0;  // int4 latency / int8 latency
  double int4_latency_us = 0.0;
  double int8_latency_us = 0.0;
};

/// Evaluates the spec's default configuration under INT4 and INT8.
PrecisionComparison int4_vs_int8_report(const KernelSpec& spec,
                                        const hardware::HardwareProfile& profile,
                                        const LatencyModelParams& params);

}  // namespace qtune::kerneltune
