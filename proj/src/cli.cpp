#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "qtune/harness.hpp"

namespace qtune::harness {

namespace {

std::string default_data_dir() {
  if (const char* env = std::getenv("QTUNE_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return "data";
}

int cmd_tune(const std::string& manifest_path, const std::string& out_dir) {
  RunManifest manifest = RunManifest::load_file(manifest_path);
  const std::filesystem::path dir = out_dir.empty()
                                        ? std::filesystem::path("runs") / manifest.run_id
                                        : std::filesystem::path(out_dir);
  RunResult result = run_experiment(manifest, dir);
  std::cout << "run " << manifest.run_id << ": " << result.outcome << " after "
            << result.trials.size() << " rounds; log at " << (dir / "trials.jsonl").string()
            << "\n";
  return 0;
}

int cmd_select_quant(double params, double memory_gb, const std::string& profile_name,
                     const std::string& data_dir, bool full_grid) {
  const auto profile =
      hardware::load_profile_file(resolve_profile_path(profile_name, data_dir).string());
  const std::vector<hardware::QuantScheme> schemes = {
      hardware::QuantScheme::fp16(), hardware::QuantScheme::int8(), hardware::QuantScheme::int4()};
  const auto count = static_cast<std::int64_t>(params);

  const std::vector<double> budgets =
      full_grid ? std::vector<double>{4, 12, 20, 28} : std::vector<double>{memory_gb};
  std::cout << format_gate_grid(count, budgets, schemes);

  const auto verdicts = hardware::memory_gate(count, memory_gb, schemes);
  std::vector<hardware::QuantScheme> admitted;
  for (const auto& v : verdicts)
    if (v.admitted) admitted.push_back(v.scheme);
  if (admitted.empty()) {
    std::cout << "no scheme fits in " << memory_gb << " GB on " << profile.name << "\n";
    return 0;
  }
  const auto ranked = hardware::select_quant_by_profile(profile, count, admitted);
  std::cout << "recommendation on " << profile.name << ":\n";
  for (std::size_t i = 0; i < ranked.size(); ++i)
    std::cout << "  " << (i + 1) << ". " << ranked[i].scheme.label << ": "
              << ranked[i].rationale << "\n";
  return 0;
}

int cmd_kernel_tune(const std::string& spec_name, const std::string& profile_name,
                    const std::string& data_dir, int budget, const std::string& strategy,
                    std::uint64_t seed) {
  const auto spec =
      kerneltune::KernelSpec::load_file(resolve_kernel_path(spec_name, data_dir).string());
  const auto profile =
      hardware::load_profile_file(resolve_profile_path(profile_name, data_dir).string());
  const kerneltune::LatencyModelParams params;

  std::unique_ptr<kerneltune::KernelStrategy> strat;
  if (strategy == "random") {
    strat = std::make_unique<kerneltune::RandomStrategy>(kerneltune::kernel_config_space(spec),
                                                         seed);
  } else if (strategy == "exhaustive") {
    const auto sp = kerneltune::kernel_config_space(spec);
    auto grid = kerneltune::cartesian_grid(
        sp, {{"block_x", {std::int64_t{32}, std::int64_t{64}, std::int64_t{128}, std::int64_t{256}}},
             {"unroll", {std::int64_t{1}, std::int64_t{2}, std::int64_t{4}, std::int64_t{8}}},
             {"tiling", {std::int64_t{1}, std::int64_t{4}, std::int64_t{16}, std::int64_t{64}}},
             {"grid_x", {std::int64_t{32}, std::int64_t{128}}}});
    budget = static_cast<int>(grid.size()) + 1;
    strat = std::make_unique<kerneltune::ExhaustiveStrategy>(std::move(grid));
  } else {
    throw SchemaError("unknown kernel-tune strategy: '" + strategy + "'");
  }

  const auto result = kerneltune::tune_kernel(spec, profile, params, budget, *strat);
  std::cout << "kernel " << kerneltune::kernel_kind_name(spec.kernel) << " on " << profile.name
            << ": default " << result.default_latency_us << " us -> best "
            << result.best_latency_us << " us over " << result.trace.size() << " evaluations\n"
            << "best config: " << result.best.to_json().dump() << "\n";
  return 0;
}

int cmd_compare(const std::string& space_name, const std::string& data_dir,
                const std::string& evaluator_kind, const std::vector<std::string>& optimizer_list,
                int seeds, int budget, double noise, const std::string& out_dir) {
  CompareSpec spec;
  spec.sp = space::load_space_file(resolve_space_path(space_name, data_dir).string());
  spec.evaluator_kind = evaluator_kind;
  spec.noise = noise;
  spec.optimizer_names = optimizer_list;
  for (int s = 0; s < seeds; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
  spec.budget = budget;

  const CompareReport report = compare_optimizers(spec);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream f(std::filesystem::path(out_dir) / "report.json");
    f << report.to_json().dump(2) << "\n";
  }
  write_traces_csv(report, std::filesystem::path(out_dir) / "traces.csv");
  write_convergence_svg(report, std::filesystem::path(out_dir) / "convergence.svg");

  std::cout << "objective: " << report.objective << " ("
            << optimizers::direction_name(report.direction) << ")\n";
  for (const auto& row : report.rows)
    std::cout << row.optimizer << ": mean final " << row.mean << " (stderr " << row.stderr_mean
              << ", " << row.finals.size() << " seeds)\n";
  std::cout << "report written to " << out_dir << "\n";
  return 0;
}

int cmd_replay(const std::string& run_dir) {
  const ReplayResult r = replay(run_dir);
  std::cout << r.detail << "\n";
  return r.identical ? 0 : 2;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"hardware-aware quantization and deployment auto-tuning"};
  app.require_subcommand(1);

  std::string data_dir = default_data_dir();
  app.add_option("--data-dir", data_dir, "directory holding spaces/, profiles/, kernels/");

  auto* tune = app.add_subcommand("tune", "run an experiment from a manifest");
  std::string manifest_path, out_dir;
  tune->add_option("--manifest", manifest_path, "path to a run manifest")->required();
  tune->add_option("--out", out_dir, "output run directory");

  auto* select = app.add_subcommand("select-quant", "memory-gate and rank quantization schemes");
  double params_count = 13e9, memory_gb = 12.0;
  std::string profile_name = "a6000";
  bool full_grid = false;
  select->add_option("--params", params_count, "model parameter count")->required();
  select->add_option("--memory", memory_gb, "memory budget in GB")->required();
  select->add_option("--profile", profile_name, "hardware profile name or path");
  select->add_flag("--grid", full_grid, "print the full 4x3 reference grid");

  auto* ktune = app.add_subcommand("kernel-tune", "tune a kernel against the latency model");
  std::string spec_name, kprofile = "a6000", strategy = "random";
  int kbudget = 10;
  std::uint64_t kseed = 0;
  ktune->add_option("--spec", spec_name, "kernel spec name or path")->required();
  ktune->add_option("--profile", kprofile, "hardware profile name or path");
  ktune->add_option("--budget", kbudget, "evaluation budget");
  ktune->add_option("--strategy", strategy, "random | exhaustive");
  ktune->add_option("--seed", kseed, "strategy seed");

  auto* compare = app.add_subcommand("compare", "compare optimizers on a synthetic objective");
  std::string cspace = "resnet_appendix_d", cevaluator = "sphere", cout_dir = "compare_out";
  std::vector<std::string> coptimizers{"random", "local"};
  int cseeds = 5, cbudget = 10;
  double cnoise = 0.0;
  compare->add_option("--space", cspace, "space preset name or path");
  compare->add_option("--evaluator", cevaluator, "sphere | quantization_surface | step_plateau");
  compare->add_option("--optimizers", coptimizers, "optimizer names")->delimiter(',');
  compare->add_option("--seeds", cseeds, "number of paired seeds");
  compare->add_option("--budget", cbudget, "rounds per run");
  compare->add_option("--noise", cnoise, "evaluation noise sigma");
  compare->add_option("--out", cout_dir, "output directory");

  auto* rep = app.add_subcommand("replay", "re-run a manifest and diff the trial logs");
  std::string run_dir;
  rep->add_option("--run", run_dir, "completed run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 1;
  }

  try {
    if (tune->parsed()) return cmd_tune(manifest_path, out_dir);
    if (select->parsed())
      return cmd_select_quant(params_count, memory_gb, profile_name, data_dir, full_grid);
    if (ktune->parsed())
      return cmd_kernel_tune(spec_name, kprofile, data_dir, kbudget, strategy, kseed);
    if (compare->parsed())
      return cmd_compare(cspace, data_dir, cevaluator, coptimizers, cseeds, cbudget, cnoise,
                         cout_dir);
    if (rep->parsed()) return cmd_replay(run_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::cerr << app.help();
  return 1;
}

}  // namespace qtune::harness
