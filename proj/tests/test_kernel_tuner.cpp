#include <doctest.h>

#include <filesystem>

#include "qtune/kernel_tuner.hpp"

using namespace qtune;
using namespace qtune::kerneltune;

namespace {

hardware::HardwareProfile profile(const std::string& name) {
  return hardware::load_profile_file(std::string(QTUNE_DATA_DIR) + "/profiles/" + name + ".json");
}

KernelSpec load_spec(const std::string& file) {
  return KernelSpec::load_file(std::string(QTUNE_DATA_DIR) + "/kernels/" + file);
}

std::vector<std::string> fixture_files() {
  std::vector<std::string> files;
  for (const auto& e :
       std::filesystem::directory_iterator(std::string(QTUNE_DATA_DIR) + "/kernels"))
    files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  return files;
}

KernelConfig default_config_of(const KernelSpec& s) {
  KernelConfig c;
  c.grid = s.default_grid;
  c.block = s.default_block;
  c.tiling = s.default_tiling;
  c.unroll = s.default_unroll;
  return c;
}

}  // namespace

TEST_CASE("all 15 kernel fixtures load with consistent shapes") {
  const auto files = fixture_files();
  CHECK(files.size() == 15);
  for (const auto& f : files) {
    const KernelSpec s = load_spec(f);
    CHECK(s.default_grid == Dim3{32, 1, 1});
    CHECK(s.default_block == Dim3{64, 1, 1});
    CHECK(s.default_unroll == 2);
    CHECK(s.default_tiling == 1);
    const auto j = s.to_prompt_json();
    CHECK(j.contains("kernel"));
    CHECK(j.contains("src0 tensor shape"));
    CHECK(j.contains("default gridDim"));
  }
}

TEST_CASE("kernel config invariants are enforced") {
  KernelConfig c;
  c.grid = {32, 1, 1};
  c.block = {64, 1, 1};
  c.tiling = 4;
  c.unroll = 2;
  CHECK_NOTHROW(check_kernel_config(c));

  KernelConfig over = c;
  over.block = {512, 1, 1};  // component > 256
  CHECK_THROWS_AS(check_kernel_config(over), InvalidConfigError);

  KernelConfig product = c;
  product.block = {256, 2, 4};  // product 2048 > 1024
  CHECK_THROWS_AS(check_kernel_config(product), InvalidConfigError);

  KernelConfig tiling = c;
  tiling.tiling = 3;
  CHECK_THROWS_AS(check_kernel_config(tiling), InvalidConfigError);

  KernelConfig unroll = c;
  unroll.unroll = 17;
  CHECK_THROWS_AS(check_kernel_config(unroll), InvalidConfigError);
}

TEST_CASE("model latency is deterministic and strictly positive") {
  const KernelSpec s = load_spec("softmax_1024x1x32.json");
  const auto p = profile("a6000");
  const LatencyModelParams params;
  const KernelConfig c = default_config_of(s);
  const double a = model_latency(s, c, p, params);
  const double b = model_latency(s, c, p, params);
  CHECK(a == b);
  CHECK(a > 0.0);
}

TEST_CASE("doubling unroll below the pressure threshold strictly helps") {
  const KernelSpec s = load_spec("softmax_1024x1x32.json");
  const auto p = profile("a6000");
  const LatencyModelParams params;  // threshold 4
  KernelConfig c = default_config_of(s);
  const double base = model_latency(s, c, p, params);
  c.unroll = 4;
  CHECK(model_latency(s, c, p, params) < base);
}

TEST_CASE("unroll beyond the register pressure threshold strictly regresses") {
  const KernelSpec s = load_spec("silu_11008x64x1.json");
  const auto p = profile("a6000");
  const LatencyModelParams params;
  KernelConfig at = default_config_of(s);
  at.unroll = params.register_pressure_threshold;
  const double at_threshold = model_latency(s, at, p, params);
  for (int u = params.register_pressure_threshold + 1; u <= 16; ++u) {
    KernelConfig over = at;
    over.unroll = u;
    CHECK(model_latency(s, over, p, params) > at_threshold);
  }
}

TEST_CASE("raising block.x below saturation never increases latency") {
  const KernelSpec s = load_spec("matmul_2048x128x2048.json");
  const auto p = profile("a6000");
  const LatencyModelParams params;
  KernelConfig c = default_config_of(s);
  double prev = std::numeric_limits<double>::infinity();
  for (std::int64_t bx : {8, 16, 32, 64, 128, 256}) {
    c.block = {bx, 1, 1};
    const double lat = model_latency(s, c, p, params);
    CHECK(lat <= prev);
    prev = lat;
  }
}

TEST_CASE("emulated INT4 is strictly slower than INT8 on the same profile") {
  const auto adreno = profile("adreno740");
  const LatencyModelParams params;
  for (const auto& f : fixture_files()) {
    const KernelSpec s = load_spec(f);
    const KernelConfig c = default_config_of(s);
    const double int4 = model_latency(s.with_tensor_type("int4"), c, adreno, params);
    const double int8 = model_latency(s.with_tensor_type("int8"), c, adreno, params);
    CHECK(int4 > int8);
  }
}

TEST_CASE("identical INT4 run is slower on the emulating profile than on native hardware") {
  const auto a6000 = profile("a6000");
  const auto adreno = profile("adreno740");
  const LatencyModelParams params;
  const KernelSpec s = load_spec("softmax_1024x1x32.json").with_tensor_type("int4");
  const KernelConfig c = default_config_of(s);
  CHECK(model_latency(s, c, adreno, params) > model_latency(s, c, a6000, params));
}

TEST_CASE("int4 vs int8 report matches the per-platform direction") {
  const LatencyModelParams params;
  for (const auto& f : fixture_files()) {
    const KernelSpec s = load_spec(f);
    CHECK(int4_vs_int8_report(s, profile("adreno740"), params).faster.label == "INT8");
    CHECK(int4_vs_int8_report(s, profile("a6000"), params).faster.label == "INT4");
  }
}

TEST_CASE("int4 vs int8 report is exactly symmetric for equal native figures") {
  hardware::HardwareProfile p;
  p.name = "symmetric";
  p.native_precisions = {hardware::Precision::FP16, hardware::Precision::INT8,
                         hardware::Precision::INT4};
  p.fp16_tflops = 100;
  p.int8_tops = 200;
  p.int4_tops = 200;
  p.check();
  const auto cmp = int4_vs_int8_report(load_spec("rope_128x64x1.json"), p, {});
  CHECK(std::abs(cmp.ratio - 1.0) < 1e-9);
}

TEST_CASE("tune_kernel with budget 1 returns the default configuration") {
  const KernelSpec s = load_spec("rmsnorm_4096x1x1.json");
  const auto p = profile("a6000");
  RandomStrategy strategy(kernel_config_space(s), 7);
  const auto r = tune_kernel(s, p, {}, 1, strategy);
  CHECK(r.trace.size() == 1);
  CHECK(r.best == default_config_of(s));
  CHECK(r.best_latency_us == r.default_latency_us);
}

TEST_CASE("exhaustive tuning equals the brute-force argmin over the grid") {
  const KernelSpec s = load_spec("softmax_1024x1x32.json");
  const auto p = profile("a6000");
  const LatencyModelParams params;
  const auto sp = kernel_config_space(s);

  auto grid = cartesian_grid(
      sp, {{"block_x", {std::int64_t{16}, std::int64_t{64}, std::int64_t{128}, std::int64_t{256}}},
           {"unroll", {std::int64_t{1}, std::int64_t{2}, std::int64_t{4}, std::int64_t{8}}},
           {"tiling", {std::int64_t{1}, std::int64_t{8}, std::int64_t{64}, std::int64_t{256}}}});
  REQUIRE(grid.size() == 64);

  double brute_best = std::numeric_limits<double>::infinity();
  for (const auto& g : grid) {
    const double lat = model_latency(s, kernel_config_from_assignment(g), p, params);
    brute_best = std::min(brute_best, lat);
  }
  KernelConfig def = default_config_of(s);
  brute_best = std::min(brute_best, model_latency(s, def, p, params));

  ExhaustiveStrategy strategy(grid);
  const auto r = tune_kernel(s, p, params, static_cast<int>(grid.size()) + 1, strategy);
  CHECK(r.best_latency_us == doctest::Approx(brute_best).epsilon(1e-12));
}

TEST_CASE("tuning every fixture with budget 10 never loses to the default") {
  const auto p = profile("a6000");
  const LatencyModelParams params;
  for (const auto& f : fixture_files()) {
    const KernelSpec s = load_spec(f);
    RandomStrategy strategy(kernel_config_space(s), 3);
    const auto r = tune_kernel(s, p, params, 10, strategy);
    CHECK(r.best_latency_us <= r.default_latency_us);
    CHECK(r.trace.size() == 10);
  }
}

TEST_CASE("kernel config space round-trips configs and keeps proposals valid") {
  const KernelSpec s = load_spec("matmul_2048x1x2048.json");
  const auto sp = kernel_config_space(s);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = space::sample(sp, seed);
    CHECK_NOTHROW(check_kernel_config(kernel_config_from_assignment(c)));
  }
  KernelConfig def = default_config_of(s);
  CHECK(kernel_config_from_assignment(assignment_from_kernel_config(sp, def)) == def);
}

TEST_CASE("kernel config JSON accepts the dialogue schema") {
  const auto doc = nlohmann::ordered_json::parse(R"({
    "griddim": [64,1,1],
    "blockdim": [128,1,1],
    "tiling size": 4,
    "unroll size": 4,
    "code changed": true,
    "code": "__global__ void k(...) {}"
  })");
  const KernelConfig c = KernelConfig::from_json(doc);
  CHECK(c.grid == Dim3{64, 1, 1});
  CHECK(c.block == Dim3{128, 1, 1});
  CHECK(c.tiling == 4);
  CHECK(c.unroll == 4);
  CHECK(c.code_changed);
  CHECK_NOTHROW(check_kernel_config(c));
}
