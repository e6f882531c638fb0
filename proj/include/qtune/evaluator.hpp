#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qtune/errors.hpp"
#include "qtune/hardware.hpp"
#include "qtune/kernel_tuner.hpp"
#include "qtune/optimizers.hpp"
#include "qtune/search_space.hpp"

namespace qtune::harness {

/// Produces the measured quantities for one configuration. Synthetic and
/// kernel-simulator evaluators are deterministic given their seed.
class Evaluator {
 public:
  virtual ~Evaluator() = default;

  struct Result {
    std::map<std::string, double> values;
    std::vector<double> loss_trace;
  };

  virtual const std::vector<optimizers::Objective>& objectives() const = 0;
  virtual std::string kind() const = 0;
  virtual Result evaluate(const space::Configuration& config) = 0;
};

/// Negated squared distance to a seed-derived optimum in normalized space;
/// the global maximum is exactly 0 at the optimum.
class SphereEvaluator : public Evaluator {
 public:
  SphereEvaluator(space::SearchSpace sp, std::size_t dims, std::uint64_t seed, double noise_sigma);

  const std::vector<optimizers::Objective>& objectives() const override { return objectives_; }
  std::string kind() const override { return "sphere"; }
  Result evaluate(const space::Configuration& config) override;

  const std::vector<double>& optimum_normalized() const { return optimum_; }

 protected:
  double sphere_value(const space::Configuration& config) const;
  double next_noise();

  space::SearchSpace space_;
  std::vector<double> optimum_;
  double noise_sigma_;
  std::uint64_t noise_seed_;
  std::uint64_t noise_calls_ = 0;
  std::vector<optimizers::Objective> objectives_;
};

/// Sphere plus a weight-bit penalty and a learning-rate/batch-size
/// interaction ridge.
class QuantizationSurfaceEvaluator : public SphereEvaluator {
 public:
  QuantizationSurfaceEvaluator(space::SearchSpace sp, std::size_t dims, std::uint64_t seed,
                               double noise_sigma, int weight_bits);
  std::string kind() const override { return "quantization_surface"; }
  Result evaluate(const space::Configuration& config) override;

 private:
  int weight_bits_;
};

/// Piecewise-constant sphere (flat feedback over plateaus).
class StepPlateauEvaluator : public SphereEvaluator {
 public:
  StepPlateauEvaluator(space::SearchSpace sp, std::size_t dims, std::uint64_t seed,
                       double noise_sigma, int levels);
  std::string kind() const override { return "step_plateau"; }
  Result evaluate(const space::Configuration& config) override;

 private:
  int levels_;
};

std::unique_ptr<Evaluator> make_synthetic_evaluator(const std::string& name,
                                                    const space::SearchSpace& sp,
                                                    std::size_t dims, std::uint64_t seed,
                                                    double noise_sigma, int extra = 0);

/// Minimizes the modeled latency of kernel configurations proposed over
/// kernel_config_space(spec).
class KernelSimEvaluator : public Evaluator {
 public:
  KernelSimEvaluator(kerneltune::KernelSpec spec, hardware::HardwareProfile profile,
                     kerneltune::LatencyModelParams params);

  const std::vector<optimizers::Objective>& objectives() const override { return objectives_; }
  std::string kind() const override { return "kernel_sim"; }
  Result evaluate(const space::Configuration& config) override;

  const kerneltune::KernelSpec& spec() const { return spec_; }
  const space::SearchSpace& config_space() const { return config_space_; }

 private:
  kerneltune::KernelSpec spec_;
  hardware::HardwareProfile profile_;
  kerneltune::LatencyModelParams params_;
  space::SearchSpace config_space_;
  std::vector<optimizers::Objective> objectives_;
};

struct ExternalEvalConfig {
  std::string command_template;  // must contain {config}; {metrics} optional
  std::string working_dir = ".";
  double timeout_seconds = 600.0;
  std::string metrics_path;  // default: <working_dir>/metrics.json
  std::vector<optimizers::Objective> objectives;
};

/// Writes the proposal as a JSON config file, runs the command, and reads a
/// metrics JSON file {objective -> number, optional "loss_trace"}.
/// Throws TimeoutError, NonzeroExitError (with stderr tail), or
/// MetricsParseError.
class ExternalEvaluator : public Evaluator {
 public:
  explicit ExternalEvaluator(ExternalEvalConfig cfg);

  const std::vector<optimizers::Objective>& objectives() const override {
    return cfg_.objectives;
  }
  std::string kind() const override { return "external_command"; }
  Result evaluate(const space::Configuration& config) override;

 private:
  ExternalEvalConfig cfg_;
  int round_ = 0;
};

}  // namespace qtune::harness
