#include "qtune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qtune::harness {

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["space"] = space;
  j["optimizer"] = optimizer;
  j["seed"] = seed;
  j["budget"] = budget;
  j["evaluator"] = evaluator;
  if (!hardware_profile.empty()) j["hardware_profile"] = hardware_profile;
  if (!kernel_spec.empty()) j["kernel_spec"] = kernel_spec;
  j["history"] = {{"keep_verbatim", history.keep_verbatim},
                  {"summarize_rest", history.summarize_rest}};
  j["token_cap"] = token_cap;
  if (!agent.is_null() && !agent.empty()) j["agent"] = agent;
  if (!target.empty()) {
    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [k, v] : target) t[k] = v;
    j["target"] = t;
  }
  j["deterministic_time"] = deterministic_time;
  j["data_dir"] = data_dir;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::ordered_json& j) {
  RunManifest m;
  m.run_id = j.value("run_id", std::string("run"));
  if (!j.contains("space")) throw SchemaError("manifest requires 'space'");
  m.space = j["space"].get<std::string>();
  m.optimizer = j.value("optimizer", std::string("random"));
  m.seed = j.value("seed", std::uint64_t{0});
  m.budget = j.value("budget", 10);
  if (j.contains("evaluator")) m.evaluator = j["evaluator"];
  m.hardware_profile = j.value("hardware_profile", std::string());
  m.kernel_spec = j.value("kernel_spec", std::string());
  if (j.contains("history")) {
    m.history.keep_verbatim = j["history"].value("keep_verbatim", 5);
    m.history.summarize_rest = j["history"].value("summarize_rest", true);
  }
  m.token_cap = j.value("token_cap", 16000);
  if (j.contains("agent")) m.agent = j["agent"];
  if (j.contains("target"))
    for (const auto& [k, v] : j["target"].items()) m.target[k] = v.get<double>();
  m.deterministic_time = j.value("deterministic_time", true);
  m.data_dir = j.value("data_dir", std::string("data"));
  return m;
}

RunManifest RunManifest::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest: " + path.string());
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("manifest is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

namespace {

std::filesystem::path resolve(const std::string& name_or_path, const std::string& data_dir,
                              const std::string& subdir) {
  if (name_or_path.find('/') != std::string::npos || name_or_path.ends_with(".json"))
    return name_or_path;
  return std::filesystem::path(data_dir) / subdir / (name_or_path + ".json");
}

}  // namespace

std::filesystem::path resolve_space_path(const std::string& name_or_path,
                                         const std::string& data_dir) {
  return resolve(name_or_path, data_dir, "spaces");
}
std::filesystem::path resolve_profile_path(const std::string& name_or_path,
                                           const std::string& data_dir) {
  return resolve(name_or_path, data_dir, "profiles");
}
std::filesystem::path resolve_kernel_path(const std::string& name_or_path,
                                          const std::string& data_dir) {
  return resolve(name_or_path, data_dir, "kernels");
}

namespace {

std::unique_ptr<Evaluator> build_evaluator(const RunManifest& m, const space::SearchSpace& sp) {
  const auto& e = m.evaluator;
  const std::string kind = e.is_object() ? e.value("kind", std::string("sphere")) : "sphere";
  if (kind == "sphere" || kind == "quantization_surface" || kind == "step_plateau") {
    const auto dims = e.is_object() ? e.value("dims", sp.size()) : sp.size();
    const auto seed = e.is_object() ? e.value("seed", m.seed) : m.seed;
    const double noise = e.is_object() ? e.value("noise", 0.0) : 0.0;
    const int extra = e.is_object() ? e.value("extra", 0) : 0;
    return make_synthetic_evaluator(kind, sp, dims, seed, noise, extra);
  }
  if (kind == "kernel_sim") {
    if (m.kernel_spec.empty())
      throw SchemaError("kernel_sim evaluator requires 'kernel_spec' in the manifest");
    auto spec = kerneltune::KernelSpec::load_file(
        resolve_kernel_path(m.kernel_spec, m.data_dir).string());
    auto profile = hardware::load_profile_file(
        resolve_profile_path(m.hardware_profile.empty() ? "a6000" : m.hardware_profile,
                             m.data_dir)
            .string());
    return std::make_unique<KernelSimEvaluator>(spec, profile, kerneltune::LatencyModelParams{});
  }
  if (kind == "external_command") {
    ExternalEvalConfig cfg;
    cfg.command_template = e.at("command").get<std::string>();
    cfg.working_dir = e.value("working_dir", std::string("."));
    cfg.timeout_seconds = e.value("timeout_seconds", 600.0);
    cfg.metrics_path = e.value("metrics_path", std::string());
    if (!e.contains("objectives")) throw SchemaError("external evaluator requires 'objectives'");
    for (const auto& [name, dir] : e["objectives"].items())
      cfg.objectives.push_back({name, optimizers::direction_from_name(dir.get<std::string>())});
    return std::make_unique<ExternalEvaluator>(std::move(cfg));
  }
  throw SchemaError("unknown evaluator kind: '" + kind + "'");
}

std::unique_ptr<agent::ChatBackend> build_backend(const RunManifest& m,
                                                  const space::SearchSpace& sp) {
  const auto& a = m.agent;
  const std::string kind = a.is_object() ? a.value("kind", std::string("mock_cd")) : "mock_cd";
  if (kind == "mock_cd" || kind == "coordinate_descent")
    return agent::make_coordinate_descent_backend(sp, a.is_object() ? a.value("seed", m.seed)
                                                                    : m.seed);
  if (kind == "scripted") {
    std::vector<std::string> replies;
    for (const auto& r : a.at("replies")) replies.push_back(r.get<std::string>());
    return agent::make_scripted_backend(std::move(replies));
  }
  if (kind == "http") {
    agent::HttpBackendConfig cfg;
    cfg.endpoint = a.value("endpoint", cfg.endpoint);
    cfg.path = a.value("path", cfg.path);
    cfg.model = a.value("model", cfg.model);
    cfg.temperature = a.value("temperature", cfg.temperature);
    cfg.timeout_seconds = a.value("timeout_seconds", cfg.timeout_seconds);
    cfg.max_input_tokens = a.value("max_input_tokens", cfg.max_input_tokens);
    return agent::make_http_backend(cfg);
  }
  throw SchemaError("unknown agent backend kind: '" + kind + "'");
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool target_met(const std::map<std::string, double>& target,
                const std::vector<optimizers::Objective>& objectives,
                const std::map<std::string, double>& values) {
  if (target.empty()) return false;
  for (const auto& [name, threshold] : target) {
    auto it = values.find(name);
    if (it == values.end()) return false;
    optimizers::Direction dir = optimizers::Direction::Maximize;
    for (const auto& o : objectives)
      if (o.name == name) dir = o.direction;
    const bool met = dir == optimizers::Direction::Maximize ? it->second >= threshold
                                                            : it->second <= threshold;
    if (!met) return false;
  }
  return true;
}

}  // namespace

std::unique_ptr<optimizers::Optimizer> make_optimizer_by_name(
    const std::string& name, const space::SearchSpace& sp, std::uint64_t seed, int budget,
    const optimizers::Objective& primary, agent::ChatBackend* backend,
    const prompt::StaticPrompt* static_prompt) {
  if (name == "random") return optimizers::make_random_search(sp, seed, budget);
  if (name == "local") return optimizers::make_local_search(sp, seed, budget, primary);
  if (name == "bayes" || name == "bayesian") {
    const int init = std::max(1, std::min(3, budget - 1));
    return optimizers::make_bayesian_opt(sp, seed, budget, init, primary);
  }
  if (name == "nsga2") {
    int population = 4;
    while (budget >= 2 * (population + 2) && population < 16) population += 2;
    return optimizers::make_nsga2(sp, seed, budget, population, {primary});
  }
  if (name == "agent") {
    optimizers::AgentOptimizerConfig cfg;
    if (backend != nullptr) {
      cfg.backend = backend;
    } else {
      // Self-contained default: the deterministic coordinate-descent mock.
      cfg.owned_backend = agent::make_coordinate_descent_backend(sp, seed);
    }
    cfg.static_prompt =
        static_prompt != nullptr ? *static_prompt : prompt::render_static(sp, nullptr, {}, {});
    cfg.space = sp;
    cfg.budget = budget;
    return optimizers::make_agent_optimizer(std::move(cfg));
  }
  throw SchemaError("unknown optimizer: '" + name + "'");
}

RunResult run_experiment(const RunManifest& manifest, const std::filesystem::path& out_dir) {
  if (manifest.budget < 1) throw Error("manifest budget must be >= 1");

  const space::SearchSpace sp =
      space::load_space_file(resolve_space_path(manifest.space, manifest.data_dir).string());
  std::unique_ptr<Evaluator> evaluator = build_evaluator(manifest, sp);

  // The optimizer proposes over the evaluator's own space for kernel runs.
  const space::SearchSpace* opt_space = &sp;
  if (auto* ks = dynamic_cast<KernelSimEvaluator*>(evaluator.get())) opt_space = &ks->config_space();

  const optimizers::Objective primary = evaluator->objectives().front();

  std::unique_ptr<agent::ChatBackend> backend;
  prompt::StaticPrompt static_prompt;
  agent::UsageLedger ledger;
  std::unique_ptr<optimizers::Optimizer> optimizer;
  optimizers::AgentOptimizer* agent_opt = nullptr;

  if (manifest.optimizer == "agent") {
    backend = build_backend(manifest, *opt_space);
    prompt::StaticPromptOptions opts;
    opts.task_label = opt_space->name();
    std::optional<hardware::HardwareProfile> profile;
    if (!manifest.hardware_profile.empty())
      profile = hardware::load_profile_file(
          resolve_profile_path(manifest.hardware_profile, manifest.data_dir).string());
    static_prompt = prompt::render_static(*opt_space, profile ? &*profile : nullptr, {}, opts);

    optimizers::AgentOptimizerConfig cfg;
    cfg.backend = backend.get();
    cfg.static_prompt = static_prompt;
    cfg.space = *opt_space;
    cfg.history = manifest.history;
    cfg.budget = manifest.budget;
    cfg.token_cap = manifest.token_cap;
    cfg.ledger = &ledger;
    auto ao = optimizers::make_agent_optimizer(std::move(cfg));
    agent_opt = ao.get();
    optimizer = std::move(ao);
  } else {
    optimizer = make_optimizer_by_name(manifest.optimizer, *opt_space, manifest.seed,
                                       manifest.budget, primary);
  }

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream mf(out_dir / "manifest.json");
    mf << manifest.to_json().dump(2) << "\n";
  }
  std::ofstream log(out_dir / "trials.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot open trial log in " + out_dir.string());

  RunResult result;
  result.dir = out_dir;
  result.outcome = "budget_exhausted";
  std::vector<optimizers::Observation> observations;

  for (int round = 1; round <= manifest.budget; ++round) {
    TrialRecord t;
    t.round = round;
    t.started_ms = manifest.deterministic_time ? round : now_ms();

    space::Configuration config = optimizer->propose();
    Evaluator::Result eval = evaluator->evaluate(config);

    t.config = config;
    t.objectives = eval.values;
    t.loss_trace = eval.loss_trace;
    if (agent_opt != nullptr) {
      t.agent_attempts = agent_opt->last_meta().attempts;
      t.repaired = agent_opt->last_meta().repaired;
      if (agent_opt->last_meta().thought_text) t.notes = *agent_opt->last_meta().thought_text;
    }
    t.finished_ms = manifest.deterministic_time ? round : now_ms();

    log << t.to_json().dump() << "\n";
    log.flush();
    result.trials.push_back(t);

    optimizers::Observation obs{config, eval.values, round};
    observations.push_back(obs);
    optimizer->observe(obs);

    if (target_met(manifest.target, evaluator->objectives(), eval.values)) {
      result.outcome = "target_met";
      break;
    }
  }

  {
    std::ofstream csv(out_dir / "traces.csv");
    csv << "round";
    for (const auto& o : evaluator->objectives()) csv << ",best_" << o.name;
    csv << "\n";
    std::vector<std::vector<double>> traces;
    for (const auto& o : evaluator->objectives())
      traces.push_back(optimizers::best_so_far(observations, o.name, o.direction));
    for (std::size_t r = 0; r < observations.size(); ++r) {
      csv << (r + 1);
      for (const auto& tr : traces) csv << "," << format_double(tr[r]);
      csv << "\n";
    }
  }
  {
    std::ofstream usage(out_dir / "usage.json");
    nlohmann::ordered_json u;
    u["outcome"] = result.outcome;
    u["rounds"] = result.trials.size();
    if (manifest.optimizer == "agent") u["ledger"] = ledger.to_json();
    usage << u.dump(2) << "\n";
  }
  return result;
}

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ReplayResult replay(const std::filesystem::path& run_dir) {
  const auto manifest_path = run_dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw Error("no manifest.json under " + run_dir.string());
  RunManifest manifest = RunManifest::load_file(manifest_path);

  const auto scratch = run_dir / "replay_check";
  run_experiment(manifest, scratch);

  const std::string original = read_file(run_dir / "trials.jsonl");
  const std::string rerun = read_file(scratch / "trials.jsonl");
  ReplayResult r;
  r.identical = original == rerun;
  r.detail = r.identical ? "logs identical"
                         : "trial logs differ (" + std::to_string(original.size()) + " vs " +
                               std::to_string(rerun.size()) + " bytes)";
  return r;
}

nlohmann::ordered_json CompareReport::to_json() const {
  nlohmann::ordered_json j;
  j["objective"] = objective;
  j["direction"] = optimizers::direction_name(direction);
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json e;
    e["optimizer"] = r.optimizer;
    e["finals"] = r.finals;
    e["mean_final"] = r.mean;
    e["stderr_final"] = r.stderr_mean;
    j["rows"].push_back(e);
  }
  return j;
}

CompareReport compare_optimizers(const CompareSpec& spec) {
  if (spec.optimizer_names.size() < 2)
    throw Error("compare requires at least two optimizers");
  if (spec.seeds.size() < 2) throw Error("compare requires at least two seeds");

  CompareReport report;
  {
    auto probe = make_synthetic_evaluator(spec.evaluator_kind, spec.sp, spec.sp.size(),
                                          spec.seeds.front(), spec.noise);
    report.objective = probe->objectives().front().name;
    report.direction = probe->objectives().front().direction;
  }

  for (const auto& name : spec.optimizer_names) {
    OptimizerAggregate row;
    row.optimizer = name;
    for (const std::uint64_t seed : spec.seeds) {
      // The evaluator is seeded by the seed index only, so every optimizer
      // sees identical randomness: a paired design.
      auto evaluator = make_synthetic_evaluator(spec.evaluator_kind, spec.sp, spec.sp.size(),
                                                seed, spec.noise);
      const optimizers::Objective primary = evaluator->objectives().front();
      auto optimizer = make_optimizer_by_name(name, spec.sp, seed, spec.budget, primary);

      std::vector<optimizers::Observation> observations;
      for (int round = 1; round <= spec.budget; ++round) {
        space::Configuration config = optimizer->propose();
        auto eval = evaluator->evaluate(config);
        optimizers::Observation obs{config, eval.values, round};
        observations.push_back(obs);
        optimizer->observe(obs);
      }
      auto trace = optimizers::best_so_far(observations, primary.name, primary.direction);
      row.traces.push_back(trace);
      row.finals.push_back(trace.back());
    }
    double mean = 0.0;
    for (double v : row.finals) mean += v;
    mean /= static_cast<double>(row.finals.size());
    double var = 0.0;
    for (double v : row.finals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.finals.size());
    row.mean = mean;
    row.stderr_mean = std::sqrt(var / static_cast<double>(row.finals.size()));
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_traces_csv(const CompareReport& report, const std::filesystem::path& path) {
  std::ofstream csv(path);
  csv << "optimizer,seed_index,round,best_so_far\n";
  for (const auto& row : report.rows)
    for (std::size_t s = 0; s < row.traces.size(); ++s)
      for (std::size_t r = 0; r < row.traces[s].size(); ++r)
        csv << row.optimizer << "," << s << "," << (r + 1) << ","
            << format_double(row.traces[s][r]) << "\n";
}

double sign_test_p_value(int wins, int n) {
  if (n <= 0) return 1.0;
  // Binomial(n, 1/2) upper tail via log factorials.
  std::vector<double> logfact(static_cast<std::size_t>(n) + 1, 0.0);
  for (int i = 1; i <= n; ++i) logfact[i] = logfact[i - 1] + std::log(static_cast<double>(i));
  double p = 0.0;
  for (int k = std::max(0, wins); k <= n; ++k) {
    const double logc = logfact[n] - logfact[k] - logfact[n - k];
    p += std::exp(logc - n * std::log(2.0));
  }
  return std::min(1.0, p);
}

std::string format_gate_grid(std::int64_t param_count, const std::vector<double>& budgets_gb,
                             const std::vector<hardware::QuantScheme>& schemes) {
  std::ostringstream os;
  os << "Memory (GB)";
  for (const auto& s : schemes) os << " | " << s.label;
  os << "\n";
  for (double b : budgets_gb) {
    os << format_double(b);
    const auto verdicts = hardware::memory_gate(param_count, b, schemes);
    for (const auto& v : verdicts) {
      os << " | " << (v.admitted ? "admit" : "reject");
      if (!v.admitted) os << " (needs " << format_double(v.required_gb) << " GB)";
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace qtune::harness
