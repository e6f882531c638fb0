#include "qtune/evaluator.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

namespace qtune::harness {

SphereEvaluator::SphereEvaluator(space::SearchSpace sp, std::size_t dims, std::uint64_t seed,
                                 double noise_sigma)
    : space_(std::move(sp)), noise_sigma_(noise_sigma), noise_seed_(seed ^ 0xABCDEF12345ULL) {
  if (dims != space_.size())
    throw DimensionMismatchError("evaluator declared " + std::to_string(dims) +
                                 " dims, space has " + std::to_string(space_.size()));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  optimum_.resize(space_.size());
  for (auto& o : optimum_) o = u(rng);
  objectives_ = {{"accuracy", optimizers::Direction::Maximize}};
}

double SphereEvaluator::sphere_value(const space::Configuration& config) const {
  const std::vector<double> z = space::normalize(space_, config);
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - optimum_[i]) * (z[i] - optimum_[i]);
  return -s;
}

double SphereEvaluator::next_noise() {
  if (noise_sigma_ <= 0.0) return 0.0;
  std::mt19937_64 rng(space::derive_seed(noise_seed_, noise_calls_++));
  std::normal_distribution<double> n(0.0, noise_sigma_);
  return n(rng);
}

Evaluator::Result SphereEvaluator::evaluate(const space::Configuration& config) {
  return {{{"accuracy", sphere_value(config) + next_noise()}}, {}};
}

QuantizationSurfaceEvaluator::QuantizationSurfaceEvaluator(space::SearchSpace sp,
                                                           std::size_t dims, std::uint64_t seed,
                                                           double noise_sigma, int weight_bits)
    : SphereEvaluator(std::move(sp), dims, seed, noise_sigma), weight_bits_(weight_bits) {}

Evaluator::Result QuantizationSurfaceEvaluator::evaluate(const space::Configuration& config) {
  double v = sphere_value(config);
  // Lower bit-widths train harder; the deficit is a flat penalty.
  v -= 0.02 * static_cast<double>(16 - weight_bits_) / 16.0;
  const space::ParamSpec* lr = space_.find("learning_rate");
  const space::ParamSpec* bs = space_.find("batch_size");
  if (bs == nullptr) bs = space_.find("per_device_train_batch_size");
  if (lr != nullptr && bs != nullptr) {
    const std::vector<double> z = space::normalize(space_, config);
    std::size_t il = 0, ib = 0;
    for (std::size_t i = 0; i < space_.size(); ++i) {
      if (space_.params()[i].name == lr->name) il = i;
      if (space_.params()[i].name == bs->name) ib = i;
    }
    // Mismatched learning rate and batch size sit on a ridge.
    v -= 0.25 * (z[il] - z[ib]) * (z[il] - z[ib]);
  }
  return {{{"accuracy", v + next_noise()}}, {}};
}

StepPlateauEvaluator::StepPlateauEvaluator(space::SearchSpace sp, std::size_t dims,
                                           std::uint64_t seed, double noise_sigma, int levels)
    : SphereEvaluator(std::move(sp), dims, seed, noise_sigma), levels_(std::max(1, levels)) {}

Evaluator::Result StepPlateauEvaluator::evaluate(const space::Configuration& config) {
  const double v = sphere_value(config);
  const double stepped = std::floor(v * levels_) / levels_;
  return {{{"accuracy", stepped + next_noise()}}, {}};
}

std::unique_ptr<Evaluator> make_synthetic_evaluator(const std::string& name,
                                                    const space::SearchSpace& sp,
                                                    std::size_t dims, std::uint64_t seed,
                                                    double noise_sigma, int extra) {
  if (name == "sphere") return std::make_unique<SphereEvaluator>(sp, dims, seed, noise_sigma);
  if (name == "quantization_surface")
    return std::make_unique<QuantizationSurfaceEvaluator>(sp, dims, seed, noise_sigma,
                                                          extra > 0 ? extra : 8);
  if (name == "step_plateau")
    return std::make_unique<StepPlateauEvaluator>(sp, dims, seed, noise_sigma,
                                                  extra > 0 ? extra : 5);
  throw SchemaError("unknown synthetic evaluator: '" + name + "'");
}

KernelSimEvaluator::KernelSimEvaluator(kerneltune::KernelSpec spec,
                                       hardware::HardwareProfile profile,
                                       kerneltune::LatencyModelParams params)
    : spec_(std::move(spec)),
      profile_(std::move(profile)),
      params_(params),
      config_space_(kerneltune::kernel_config_space(spec_)) {
  objectives_ = {{"latency_us", optimizers::Direction::Minimize}};
}

Evaluator::Result KernelSimEvaluator::evaluate(const space::Configuration& config) {
  const kerneltune::KernelConfig kc = kerneltune::kernel_config_from_assignment(config);
  return {{{"latency_us", kerneltune::model_latency(spec_, kc, profile_, params_)}}, {}};
}

ExternalEvaluator::ExternalEvaluator(ExternalEvalConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.command_template.find("{config}") == std::string::npos)
    throw SchemaError("external evaluator command template must contain {config}");
  if (cfg_.objectives.empty())
    throw SchemaError("external evaluator requires declared objectives");
  if (cfg_.metrics_path.empty())
    cfg_.metrics_path = (std::filesystem::path(cfg_.working_dir) / "metrics.json").string();
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string tail_of_file(const std::filesystem::path& path, std::size_t max_bytes = 2048) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "";
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  const auto start = size > max_bytes ? size - max_bytes : 0;
  in.seekg(static_cast<std::streamoff>(start));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Runs via /bin/sh with stderr captured; polls for the timeout.
int run_command(const std::string& command, const std::filesystem::path& stderr_path,
                double timeout_seconds) {
  const pid_t pid = fork();
  if (pid < 0) throw EvaluatorError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    const std::string redirected = command + " 2>" + stderr_path.string();
    execl("/bin/sh", "sh", "-c", redirected.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(timeout_seconds);
  while (true) {
    int status = 0;
    const pid_t done = waitpid(pid, &status, WNOHANG);
    if (done == pid) {
      if (WIFEXITED(status)) return WEXITSTATUS(status);
      return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    }
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw TimeoutError("external evaluator timed out after " +
                         std::to_string(timeout_seconds) + " s: " + command);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

}  // namespace

Evaluator::Result ExternalEvaluator::evaluate(const space::Configuration& config) {
  ++round_;
  const std::filesystem::path dir(cfg_.working_dir);
  std::filesystem::create_directories(dir);
  const std::filesystem::path config_path = dir / ("config_" + std::to_string(round_) + ".json");
  const std::filesystem::path stderr_path = dir / ("stderr_" + std::to_string(round_) + ".log");

  {
    std::ofstream out(config_path);
    out << config.to_json().dump(2) << "\n";
  }
  std::error_code ec;
  std::filesystem::remove(cfg_.metrics_path, ec);

  std::string command = replace_all(cfg_.command_template, "{config}", config_path.string());
  command = replace_all(command, "{metrics}", cfg_.metrics_path);

  const int exit_code = run_command(command, stderr_path, cfg_.timeout_seconds);
  if (exit_code != 0)
    throw NonzeroExitError(exit_code, tail_of_file(stderr_path),
                           "external evaluator exited with code " + std::to_string(exit_code));

  std::ifstream metrics_in(cfg_.metrics_path);
  if (!metrics_in)
    throw MetricsParseError("external evaluator produced no metrics file at " +
                            cfg_.metrics_path);
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(metrics_in);
  } catch (const nlohmann::json::exception& e) {
    throw MetricsParseError(std::string("metrics file is not valid JSON: ") + e.what());
  }

  Result r;
  for (const auto& o : cfg_.objectives) {
    if (!doc.contains(o.name))
      throw MetricsParseError("metrics file lacks objective '" + o.name + "'");
    if (!doc[o.name].is_number())
      throw MetricsParseError("metrics field '" + o.name + "' is not a number: " +
                              doc[o.name].dump());
    r.values[o.name] = doc[o.name].get<double>();
  }
  if (doc.contains("loss_trace")) {
    if (!doc["loss_trace"].is_array())
      throw MetricsParseError("metrics field 'loss_trace' is not an array");
    for (const auto& v : doc["loss_trace"]) {
      if (!v.is_number()) throw MetricsParseError("loss_trace entries must be numbers");
      r.loss_trace.push_back(v.get<double>());
    }
  }
  return r;
}

}  // namespace qtune::harness
