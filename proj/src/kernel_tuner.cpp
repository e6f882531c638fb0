#include "qtune/kernel_tuner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace qtune::kerneltune {

std::string kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Softmax: return "softmax";
    case KernelKind::Silu: return "silu";
    case KernelKind::RmsNorm: return "rmsnorm";
    case KernelKind::Rope: return "rope";
    case KernelKind::MatMul: return "matmul";
  }
  return "?";
}

KernelKind kernel_kind_from_name(const std::string& name) {
  if (name == "softmax") return KernelKind::Softmax;
  if (name == "silu") return KernelKind::Silu;
  if (name == "rmsnorm") return KernelKind::RmsNorm;
  if (name == "rope") return KernelKind::Rope;
  if (name == "matmul") return KernelKind::MatMul;
  throw SchemaError("unknown kernel: '" + name + "'");
}

namespace {

std::size_t kernel_arity(KernelKind k) {
  switch (k) {
    case KernelKind::Softmax: return 2;
    case KernelKind::Silu: return 1;
    case KernelKind::RmsNorm: return 1;
    case KernelKind::Rope: return 2;
    case KernelKind::MatMul: return 2;
  }
  return 1;
}

double shape_elems(const Shape4& s) {
  return static_cast<double>(s[0]) * static_cast<double>(s[1]) * static_cast<double>(s[2]) *
         static_cast<double>(s[3]);
}

bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

Shape4 shape_from_json(const nlohmann::ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4)
    throw SchemaError(what + " must be an array of 4 integers");
  Shape4 s;
  for (std::size_t i = 0; i < 4; ++i) s[i] = j[i].get<std::int64_t>();
  return s;
}

Dim3 dim3_from_json(const nlohmann::ordered_json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3)
    throw SchemaError(what + " must be an array of 3 integers");
  Dim3 d;
  for (std::size_t i = 0; i < 3; ++i) d[i] = j[i].get<std::int64_t>();
  return d;
}

nlohmann::ordered_json to_array(const Shape4& s) {
  return nlohmann::ordered_json::array({s[0], s[1], s[2], s[3]});
}
nlohmann::ordered_json to_array(const Dim3& d) {
  return nlohmann::ordered_json::array({d[0], d[1], d[2]});
}

}  // namespace

void KernelSpec::check() const {
  for (const auto& s : src_shapes)
    for (auto d : s)
      if (d < 1) throw InvariantError(kernel_kind_name(kernel), "tensor dims must be >= 1");
  for (auto d : out_shape)
    if (d < 1) throw InvariantError(kernel_kind_name(kernel), "tensor dims must be >= 1");
  if (src_shapes.size() != kernel_arity(kernel))
    throw InvariantError(kernel_kind_name(kernel),
                         "kernel '" + kernel_kind_name(kernel) + "' expects " +
                             std::to_string(kernel_arity(kernel)) + " source tensors, got " +
                             std::to_string(src_shapes.size()));
  for (auto d : default_grid)
    if (d < 1) throw InvariantError(kernel_kind_name(kernel), "grid dims must be >= 1");
  for (auto d : default_block)
    if (d < 1) throw InvariantError(kernel_kind_name(kernel), "block dims must be >= 1");
  if (default_unroll < 1 || default_tiling < 1)
    throw InvariantError(kernel_kind_name(kernel), "unroll and tiling must be >= 1");
}

nlohmann::ordered_json KernelSpec::to_prompt_json() const {
  nlohmann::ordered_json j;
  j["kernel"] = kernel_kind_name(kernel);
  j["tensor type"] = tensor_type;
  for (std::size_t i = 0; i < src_shapes.size(); ++i)
    j["src" + std::to_string(i) + " tensor shape"] = to_array(src_shapes[i]);
  j["output tensor shape"] = to_array(out_shape);
  j["default gridDim"] = to_array(default_grid);
  j["default blockDim"] = to_array(default_block);
  j["unroll size"] = default_unroll;
  j["tiling size"] = default_tiling;
  return j;
}

KernelSpec KernelSpec::from_json(const nlohmann::ordered_json& doc) {
  if (!doc.is_object()) throw SchemaError("kernel spec must be a JSON object");
  KernelSpec s;
  if (!doc.contains("kernel")) throw SchemaError("kernel spec requires a 'kernel' name");
  s.kernel = kernel_kind_from_name(doc["kernel"].get<std::string>());
  s.tensor_type = doc.value("tensor type", std::string("float32"));
  for (int i = 0; i < 4; ++i) {
    const std::string key = "src" + std::to_string(i) + " tensor shape";
    if (doc.contains(key)) s.src_shapes.push_back(shape_from_json(doc[key], key));
  }
  if (doc.contains("output tensor shape"))
    s.out_shape = shape_from_json(doc["output tensor shape"], "output tensor shape");
  else if (!s.src_shapes.empty())
    s.out_shape = s.src_shapes[0];
  if (doc.contains("default gridDim")) s.default_grid = dim3_from_json(doc["default gridDim"], "default gridDim");
  if (doc.contains("default blockDim"))
    s.default_block = dim3_from_json(doc["default blockDim"], "default blockDim");
  s.default_unroll = doc.value("unroll size", 1);
  s.default_tiling = doc.value("tiling size", 1);
  s.check();
  return s;
}

KernelSpec KernelSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open kernel spec: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("kernel spec is not valid JSON: ") + e.what());
  }
  return from_json(doc);
}

nlohmann::ordered_json KernelConfig::to_json() const {
  nlohmann::ordered_json j;
  j["griddim"] = to_array(grid);
  j["blockdim"] = to_array(block);
  j["tiling size"] = tiling;
  j["unroll size"] = unroll;
  j["code changed"] = code_changed;
  if (!code.empty()) j["code"] = code;
  return j;
}

KernelConfig KernelConfig::from_json(const nlohmann::ordered_json& doc) {
  KernelConfig c;
  if (!doc.contains("griddim") && !doc.contains("blockdim"))
    throw SchemaError("kernel configuration requires 'griddim' or 'blockdim'");
  if (doc.contains("griddim")) c.grid = dim3_from_json(doc["griddim"], "griddim");
  if (doc.contains("blockdim")) c.block = dim3_from_json(doc["blockdim"], "blockdim");
  if (doc.contains("tiling size")) c.tiling = doc["tiling size"].get<std::int64_t>();
  if (doc.contains("unroll size")) c.unroll = doc["unroll size"].get<int>();
  if (doc.contains("code changed")) c.code_changed = doc["code changed"].get<bool>();
  if (doc.contains("code") && doc["code"].is_string()) c.code = doc["code"].get<std::string>();
  return c;
}

void check_kernel_config(const KernelConfig& config) {
  for (auto d : config.grid)
    if (d < 1 || d > 256)
      throw InvalidConfigError("grid component " + std::to_string(d) + " outside [1, 256]");
  for (auto d : config.block)
    if (d < 1 || d > 256)
      throw InvalidConfigError("block component " + std::to_string(d) + " outside [1, 256]");
  if (!is_power_of_two(config.tiling) || config.tiling > 256)
    throw InvalidConfigError("tiling " + std::to_string(config.tiling) +
                             " must be a power of two in [1, 256]");
  if (config.unroll < 1 || config.unroll > 16)
    throw InvalidConfigError("unroll " + std::to_string(config.unroll) + " outside [1, 16]");
  const std::int64_t product = config.block[0] * config.block[1] * config.block[2];
  if (product > 1024)
    throw InvalidConfigError("block thread product " + std::to_string(product) + " exceeds 1024");
}

void LatencyModelParams::check() const {
  if (mem_bandwidth_coeff <= 0 || compute_coeff <= 0 || launch_overhead <= 0 ||
      unpack_penalty_per_elem <= 0 || register_pressure_threshold <= 0 ||
      occupancy_block_limit <= 0)
    throw InvariantError("latency_model", "all latency model coefficients must be positive");
}

namespace {

double kernel_flops(const KernelSpec& spec) {
  const double out = shape_elems(spec.out_shape);
  switch (spec.kernel) {
    case KernelKind::Softmax: return 8.0 * out;
    case KernelKind::Silu: return 6.0 * out;
    case KernelKind::RmsNorm: return 4.0 * out;
    case KernelKind::Rope: return 10.0 * out;
    case KernelKind::MatMul: {
      const double k = static_cast<double>(spec.src_shapes.empty() ? 1 : spec.src_shapes[0][0]);
      return 2.0 * out * k;
    }
  }
  return out;
}

struct PrecisionInfo {
  bool emulated = false;
  double speed = 1.0;
};

PrecisionInfo precision_info(const std::string& tensor_type,
                             const hardware::HardwareProfile& profile) {
  using hardware::Precision;
  PrecisionInfo info;
  std::string t;
  for (char c : tensor_type)
    t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  auto first_positive = [](std::initializer_list<double> xs) {
    for (double x : xs)
      if (x > 0) return x;
    return 1.0;
  };

  if (t == "int4") {
    if (profile.is_native(Precision::INT4)) {
      info.speed = first_positive({profile.int4_tops, profile.int8_tops, profile.fp16_tflops});
    } else {
      info.emulated = true;
      // Executes on the emulation target's unit.
      const double via_fp16 = profile.int4_emulated_via == Precision::FP16 ? 1.0 : 0.0;
      info.speed = via_fp16 > 0 ? first_positive({profile.fp16_tflops, profile.int8_tops})
                                : first_positive({profile.int8_tops, profile.fp16_tflops});
    }
  } else if (t == "int8") {
    info.emulated = !profile.is_native(Precision::INT8);
    info.speed = profile.is_native(Precision::INT8)
                     ? first_positive({profile.int8_tops, profile.fp16_tflops})
                     : first_positive({profile.fp16_tflops});
  } else {
    // float32 / float16 run on the FP pipeline and never unpack.
    info.speed = first_positive({profile.fp16_tflops, profile.int8_tops});
  }
  return info;
}

}  // namespace

double model_latency(const KernelSpec& spec, const KernelConfig& config,
                     const hardware::HardwareProfile& profile, const LatencyModelParams& params) {
  check_kernel_config(config);
  params.check();

  const double work = shape_elems(spec.out_shape);
  double total_elems = shape_elems(spec.out_shape);
  for (const auto& s : spec.src_shapes) total_elems += shape_elems(s);

  const double block_threads =
      static_cast<double>(config.block[0] * config.block[1] * config.block[2]);
  const double total_threads = static_cast<double>(config.grid[0]) * config.grid[1] *
                               config.grid[2] * block_threads;
  const double occupancy =
      std::min(1.0, static_cast<double>(params.occupancy_block_limit) / block_threads);
  const double parallelism = std::max(1.0, std::min(work, total_threads * occupancy));

  constexpr double kUnrollGainPerDoubling = 0.15;
  constexpr double kPressurePenaltyPerStep = 0.35;
  const double unroll_gain = 1.0 + kUnrollGainPerDoubling * std::log2(config.unroll);
  const double pressure =
      config.unroll > params.register_pressure_threshold
          ? 1.0 + kPressurePenaltyPerStep * (config.unroll - params.register_pressure_threshold)
          : 1.0;

  const PrecisionInfo prec = precision_info(spec.tensor_type, profile);

  const double compute_us =
      params.compute_coeff * kernel_flops(spec) / prec.speed / (parallelism * unroll_gain) *
      pressure;
  const double reuse = std::sqrt(static_cast<double>(config.tiling));
  const double memory_us = params.mem_bandwidth_coeff * total_elems / reuse;
  const double unpack_us = prec.emulated ? params.unpack_penalty_per_elem * total_elems : 0.0;

  return params.launch_overhead + compute_us + memory_us + unpack_us;
}

space::SearchSpace kernel_config_space(const KernelSpec& spec) {
  using space::ParamKind;
  using space::ParamSpec;
  auto int_param = [](std::string name, std::int64_t lo, std::int64_t hi, std::int64_t def) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::UniformInt;
    p.lower = static_cast<double>(lo);
    p.upper = static_cast<double>(hi);
    p.default_value = def;
    return p;
  };
  std::vector<ParamSpec> params;
  params.push_back(int_param("grid_x", 1, 256, spec.default_grid[0]));
  params.push_back(int_param("grid_y", 1, 256, spec.default_grid[1]));
  params.push_back(int_param("grid_z", 1, 256, spec.default_grid[2]));
  params.push_back(int_param("block_x", 1, 256, spec.default_block[0]));
  params.push_back(int_param("block_y", 1, 2, std::min<std::int64_t>(spec.default_block[1], 2)));
  params.push_back(int_param("block_z", 1, 2, std::min<std::int64_t>(spec.default_block[2], 2)));
  ParamSpec tiling;
  tiling.name = "tiling";
  tiling.kind = ParamKind::Categorical;
  for (std::int64_t t = 1; t <= 256; t *= 2) tiling.choices.emplace_back(t);
  tiling.default_value = static_cast<std::int64_t>(spec.default_tiling);
  params.push_back(tiling);
  params.push_back(int_param("unroll", 1, 16, spec.default_unroll));
  return space::SearchSpace("kernel_exec_" + kernel_kind_name(spec.kernel), std::move(params));
}

KernelConfig kernel_config_from_assignment(const space::Configuration& c) {
  auto geti = [&](const char* name, std::int64_t def) {
    const Value* v = c.find(name);
    if (v == nullptr) return def;
    return static_cast<std::int64_t>(std::llround(value_as_double(*v)));
  };
  KernelConfig k;
  k.grid = {geti("grid_x", 1), geti("grid_y", 1), geti("grid_z", 1)};
  k.block = {geti("block_x", 1), geti("block_y", 1), geti("block_z", 1)};
  k.tiling = geti("tiling", 1);
  k.unroll = static_cast<int>(geti("unroll", 1));
  return k;
}

space::Configuration assignment_from_kernel_config(const space::SearchSpace& sp,
                                                   const KernelConfig& config) {
  space::Configuration c(sp.name());
  c.set("grid_x", config.grid[0]);
  c.set("grid_y", config.grid[1]);
  c.set("grid_z", config.grid[2]);
  c.set("block_x", config.block[0]);
  c.set("block_y", config.block[1]);
  c.set("block_z", config.block[2]);
  c.set("tiling", config.tiling);
  c.set("unroll", static_cast<std::int64_t>(config.unroll));
  return c;
}

TuneResult tune_kernel(const KernelSpec& spec, const hardware::HardwareProfile& profile,
                       const LatencyModelParams& params, int budget, KernelStrategy& strategy) {
  if (budget < 1) throw Error("tune_kernel budget must be >= 1");
  spec.check();

  KernelConfig def;
  def.grid = spec.default_grid;
  def.block = spec.default_block;
  def.tiling = spec.default_tiling;
  def.unroll = spec.default_unroll;

  TuneResult result;
  result.default_latency_us = model_latency(spec, def, profile, params);
  result.best = def;
  result.best_latency_us = result.default_latency_us;
  result.trace.push_back({def, result.default_latency_us});

  for (int round = 1; round < budget; ++round) {
    space::Configuration proposal = strategy.propose();
    KernelConfig candidate = kernel_config_from_assignment(proposal);
    const double latency = model_latency(spec, candidate, profile, params);
    result.trace.push_back({candidate, latency});
    strategy.observe(proposal, latency);
    if (latency < result.best_latency_us) {
      result.best_latency_us = latency;
      result.best = candidate;
    }
  }
  return result;
}

ExhaustiveStrategy::ExhaustiveStrategy(std::vector<space::Configuration> listing)
    : listing_(std::move(listing)) {
  if (listing_.empty()) throw Error("exhaustive strategy requires a non-empty listing");
}

space::Configuration ExhaustiveStrategy::propose() {
  const space::Configuration& c = listing_[next_ % listing_.size()];
  ++next_;
  return c;
}

RandomStrategy::RandomStrategy(space::SearchSpace sp, std::uint64_t seed)
    : space_(std::move(sp)), seed_(seed) {}

space::Configuration RandomStrategy::propose() {
  return space::sample(space_, space::derive_seed(seed_, round_++));
}

std::vector<space::Configuration> cartesian_grid(
    const space::SearchSpace& sp,
    const std::vector<std::pair<std::string, std::vector<Value>>>& axes) {
  std::vector<space::Configuration> grid;
  space::Configuration base = space::default_config(sp);
  grid.push_back(base);
  for (const auto& [name, values] : axes) {
    std::vector<space::Configuration> next;
    next.reserve(grid.size() * values.size());
    for (const auto& g : grid) {
      for (const auto& v : values) {
        space::Configuration c = g;
        c.set(name, v);
        next.push_back(std::move(c));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

PrecisionComparison int4_vs_int8_report(const KernelSpec& spec,
                                        const hardware::HardwareProfile& profile,
                                        const LatencyModelParams& params) {
  KernelConfig def;
  def.grid = spec.default_grid;
  def.block = spec.default_block;
  def.tiling = spec.default_tiling;
  def.unroll = spec.default_unroll;

  PrecisionComparison cmp;
  cmp.int4_latency_us = model_latency(spec.with_tensor_type("int4"), def, profile, params);
  cmp.int8_latency_us = model_latency(spec.with_tensor_type("int8"), def, profile, params);
  cmp.ratio = cmp.int4_latency_us / cmp.int8_latency_us;
  cmp.faster = cmp.int4_latency_us < cmp.int8_latency_us ? hardware::QuantScheme::int4()
                                                         : hardware::QuantScheme::int8();
  return cmp;
}

}  // namespace qtune::kerneltune
