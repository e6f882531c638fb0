#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qtune/agent.hpp"
#include "qtune/evaluator.hpp"
#include "qtune/optimizers.hpp"
#include "qtune/prompt.hpp"
#include "qtune/trial.hpp"

namespace qtune::harness {

/// Everything needed to replay a mock/synthetic run bit-identically.
struct RunManifest {
  std::string run_id = "run";
  std::string space;      // preset name or path to a space file
  std::string optimizer = "random";
  std::uint64_t seed = 0;
  int budget = 10;
  nlohmann::ordered_json evaluator;  // {"kind": ..., kind-specific fields}
  std::string hardware_profile;      // optional preset name or path
  std::string kernel_spec;           // optional, kernel_sim runs
  prompt::HistoryPolicy history;
  int token_cap = 16000;
  nlohmann::ordered_json agent;      // backend config, agent runs only
  std::map<std::string, double> target;  // early-stop thresholds
  bool deterministic_time = true;    // logical timestamps for replayable runs
  std::string data_dir = "data";

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);
  static RunManifest load_file(const std::filesystem::path& path);
};

std::filesystem::path resolve_space_path(const std::string& name_or_path,
                                         const std::string& data_dir);
std::filesystem::path resolve_profile_path(const std::string& name_or_path,
                                           const std::string& data_dir);
std::filesystem::path resolve_kernel_path(const std::string& name_or_path,
                                          const std::string& data_dir);

struct RunResult {
  std::string outcome;  // "budget_exhausted" | "target_met"
  std::vector<TrialRecord> trials;
  std::filesystem::path dir;
};

/// Executes the iterative loop: propose, evaluate, persist, feed back. Stops
/// early when a target threshold is met (>= for maximized objectives, <= for
/// minimized). Each trial record is flushed to trials.jsonl before the next
/// round starts, so a crash leaves completed rounds on disk.
RunResult run_experiment(const RunManifest& manifest, const std::filesystem::path& out_dir);

struct ReplayResult {
  bool identical = false;
  std::string detail;
};

/// Re-runs the manifest found in `run_dir` into a scratch directory and
/// compares the trial logs byte for byte.
ReplayResult replay(const std::filesystem::path& run_dir);

struct OptimizerAggregate {
  std::string optimizer;
  std::vector<double> finals;  // per seed, last best-so-far value
  double mean = 0.0;
  double stderr_mean = 0.0;
  std::vector<std::vector<double>> traces;  // per seed best-so-far
};

struct CompareReport {
  std::string objective;
  optimizers::Direction direction = optimizers::Direction::Maximize;
  std::vector<OptimizerAggregate> rows;

  nlohmann::ordered_json to_json() const;
};

struct CompareSpec {
  space::SearchSpace sp;
  std::string evaluator_kind = "sphere";
  double noise = 0.0;
  std::vector<std::string> optimizer_names;
  std::vector<std::uint64_t> seeds;
  int budget = 10;
};

/// Runs each (optimizer, seed) cell with evaluator randomness paired by seed
/// index and aggregates final best values and convergence traces.
CompareReport compare_optimizers(const CompareSpec& spec);

void write_traces_csv(const CompareReport& report, const std::filesystem::path& path);
void write_convergence_svg(const CompareReport& report, const std::filesystem::path& path);

/// Builds a single-objective optimizer by name over the given space.
std::unique_ptr<optimizers::Optimizer> make_optimizer_by_name(
    const std::string& name, const space::SearchSpace& sp, std::uint64_t seed, int budget,
    const optimizers::Objective& primary, agent::ChatBackend* backend = nullptr,
    const prompt::StaticPrompt* static_prompt = nullptr);

/// One-sided sign test: P(X >= wins) under Binomial(n, 1/2).
double sign_test_p_value(int wins, int n);

/// Table-5-style admit grid plus the profile ranking, as printed by the CLI.
std::string format_gate_grid(std::int64_t param_count, const std::vector<double>& budgets_gb,
                             const std::vector<hardware::QuantScheme>& schemes);

int run_cli(int argc, const char* const* argv);

}  // namespace qtune::harness
