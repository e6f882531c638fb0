#include <doctest.h>

#include <cmath>
#include <random>

#include "qtune/evaluator.hpp"
#include "qtune/harness.hpp"
#include "qtune/optimizers.hpp"

using namespace qtune;
using namespace qtune::optimizers;

namespace {

space::SearchSpace resnet() {
  return space::load_space_file(std::string(QTUNE_DATA_DIR) + "/spaces/resnet_appendix_d.json");
}

space::ParamSpec float_param(const std::string& name, double lo, double hi, double def) {
  space::ParamSpec p;
  p.name = name;
  p.kind = space::ParamKind::UniformFloat;
  p.lower = lo;
  p.upper = hi;
  p.default_value = def;
  return p;
}

space::SearchSpace unit_square() {
  return space::SearchSpace("unit_square",
                            {float_param("x", 0.0, 1.0, 0.5), float_param("y", 0.0, 1.0, 0.5)});
}

std::vector<Observation> drive(Optimizer& opt, harness::Evaluator& eval, int budget) {
  std::vector<Observation> out;
  for (int round = 1; round <= budget; ++round) {
    auto config = opt.propose();
    auto r = eval.evaluate(config);
    Observation obs{config, r.values, round};
    out.push_back(obs);
    opt.observe(obs);
  }
  return out;
}

}  // namespace

TEST_CASE("best_so_far is the running optimum") {
  std::vector<Observation> obs;
  for (double a : {0.89, 0.88, 0.91}) {
    Observation o;
    o.round = static_cast<int>(obs.size()) + 1;
    o.objectives["accuracy"] = a;
    obs.push_back(o);
  }
  const auto trace = best_so_far(obs, "accuracy", Direction::Maximize);
  CHECK(trace == std::vector<double>{0.89, 0.89, 0.91});
  CHECK(best_so_far({obs[0]}, "accuracy", Direction::Maximize).size() == 1);
  CHECK_THROWS_AS(best_so_far(obs, "latency", Direction::Minimize), UnknownObjectiveError);
}

TEST_CASE("best_so_far is monotone for random traces in both directions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Observation> obs;
    for (int r = 1; r <= 30; ++r) {
      Observation o;
      o.round = r;
      o.objectives["v"] = u(rng);
      obs.push_back(o);
    }
    const auto up = best_so_far(obs, "v", Direction::Maximize);
    const auto down = best_so_far(obs, "v", Direction::Minimize);
    for (std::size_t i = 1; i < up.size(); ++i) {
      CHECK(up[i] >= up[i - 1]);
      CHECK(down[i] <= down[i - 1]);
    }
  }
}

TEST_CASE("random search is deterministic, budgeted, and always valid") {
  const auto sp = resnet();
  auto a = make_random_search(sp, 9, 10);
  auto b = make_random_search(sp, 9, 10);
  CHECK(a->budget() == 10);
  for (int i = 0; i < 10; ++i) {
    const auto ca = a->propose();
    const auto cb = b->propose();
    CHECK(ca == cb);
    CHECK(space::validate(sp, ca).valid());
  }
}

TEST_CASE("local search starts from the defaults and moves one coordinate at a time") {
  const auto sp = resnet();
  auto opt = make_local_search(sp, 3, 10, {"accuracy", Direction::Maximize});
  harness::SphereEvaluator eval(sp, sp.size(), 11, 0.0);

  auto first = opt->propose();
  CHECK(first == space::default_config(sp));
  Observation obs{first, eval.evaluate(first).values, 1};
  opt->observe(obs);

  space::Configuration incumbent = first;
  double incumbent_value = obs.objectives["accuracy"];
  for (int round = 2; round <= 10; ++round) {
    const auto proposal = opt->propose();
    CHECK(space::validate(sp, proposal).valid());
    int moved = 0;
    for (const auto& [k, v] : proposal.items())
      if (!value_equal(v, *incumbent.find(k))) ++moved;
    CHECK(moved == 1);
    Observation o{proposal, eval.evaluate(proposal).values, round};
    opt->observe(o);
    if (o.objectives["accuracy"] > incumbent_value) {
      incumbent = proposal;
      incumbent_value = o.objectives["accuracy"];
    }
  }
}

TEST_CASE("local search does not abandon the incumbent on worse results") {
  // One float parameter, objective peaked at the default: every perturbation
  // is rejected, so all proposals stay one step from the same incumbent.
  space::SearchSpace line("line", {float_param("lr", 0.0, 1.0, 0.5)});
  auto opt = make_local_search(line, 1, 10, {"f", Direction::Maximize});
  for (int round = 1; round <= 10; ++round) {
    const auto c = opt->propose();
    const double x = value_as_double(*c.find("lr"));
    if (round > 1) CHECK(std::abs(x - 0.5) == doctest::Approx(0.1));
    Observation o{c, {{"f", -(x - 0.5) * (x - 0.5)}}, round};
    opt->observe(o);
  }
}

TEST_CASE("bayesian optimization beats random search on the sphere (paired sign test)") {
  const auto sp = unit_square();
  int wins = 0, ties = 0;
  const int kSeeds = 20, kBudget = 10;
  for (int seed = 0; seed < kSeeds; ++seed) {
    harness::SphereEvaluator eval_b(sp, sp.size(), seed, 0.0);
    harness::SphereEvaluator eval_r(sp, sp.size(), seed, 0.0);
    auto bayes = make_bayesian_opt(sp, seed, kBudget, 3, {"accuracy", Direction::Maximize});
    auto random = make_random_search(sp, seed, kBudget);
    const auto obs_b = drive(*bayes, eval_b, kBudget);
    const auto obs_r = drive(*random, eval_r, kBudget);
    const double fb = best_so_far(obs_b, "accuracy", Direction::Maximize).back();
    const double fr = best_so_far(obs_r, "accuracy", Direction::Maximize).back();
    if (fb > fr)
      ++wins;
    else if (fb == fr)
      ++ties;
  }
  const int n = kSeeds - ties;
  INFO("wins=", wins, " ties=", ties);
  CHECK(harness::sign_test_p_value(wins, n) < 0.05);
}

TEST_CASE("bayesian mean final beats random on the 1-d shifted sphere") {
  space::SearchSpace line("line", {float_param("x", 0.0, 1.0, 0.5)});
  auto objective = [](const space::Configuration& c) {
    const double x = value_as_double(*c.find("x"));
    return -(x - 0.5) * (x - 0.5);
  };
  double bayes_sum = 0.0, random_sum = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    auto bayes = make_bayesian_opt(line, seed, 10, 3, {"f", Direction::Maximize});
    auto random = make_random_search(line, seed, 10);
    for (auto* pair : {&bayes, &random}) {
      std::vector<Observation> obs;
      for (int round = 1; round <= 10; ++round) {
        auto c = (*pair)->propose();
        obs.push_back({c, {{"f", objective(c)}}, round});
        (*pair)->observe(obs.back());
      }
      const double final_best = best_so_far(obs, "f", Direction::Maximize).back();
      (pair == &bayes ? bayes_sum : random_sum) += final_best;
    }
  }
  CHECK(bayes_sum / 20.0 > random_sum / 20.0);
}

TEST_CASE("agent optimizer with budget 1 makes a single proposal") {
  const auto sp = resnet();
  auto backend = agent::make_coordinate_descent_backend(sp, 1);
  AgentOptimizerConfig cfg;
  cfg.backend = backend.get();
  cfg.static_prompt = prompt::render_static(sp, nullptr, {}, {});
  cfg.space = sp;
  cfg.budget = 1;
  auto opt = make_agent_optimizer(std::move(cfg));
  const auto c = opt->propose();
  CHECK(opt->last_rounds_left() == 1);
  CHECK(c == space::default_config(sp));
  opt->observe({c, {{"accuracy", 0.9}}, 1});
  CHECK(opt->history().size() == 1);
}

TEST_CASE("bayesian optimization survives a constant objective by falling back to random") {
  const auto sp = unit_square();
  auto opt = make_bayesian_opt(sp, 2, 10, 2, {"accuracy", Direction::Maximize});
  for (int round = 1; round <= 10; ++round) {
    const auto c = opt->propose();
    CHECK(space::validate(sp, c).valid());
    opt->observe({c, {{"accuracy", 0.5}}, round});
  }
}

TEST_CASE("bayesian proposals always validate on a mixed-kind space") {
  const auto sp =
      space::load_space_file(std::string(QTUNE_DATA_DIR) + "/spaces/deploy_appendix_d.json");
  auto opt = make_bayesian_opt(sp, 4, 8, 2, {"accuracy", Direction::Maximize});
  harness::SphereEvaluator eval(sp, sp.size(), 4, 0.0);
  for (const auto& obs : drive(*opt, eval, 8))
    CHECK(space::validate(sp, obs.config).valid());
}

TEST_CASE("nsga2 rejects too-small budgets and odd populations") {
  const auto sp = unit_square();
  CHECK_THROWS_AS(make_nsga2(sp, 1, 7, 4, {{"accuracy", Direction::Maximize}}),
                  BudgetTooSmallError);
  CHECK_THROWS_AS(make_nsga2(sp, 1, 20, 5, {{"accuracy", Direction::Maximize}}), Error);
  CHECK_THROWS_AS(make_nsga2(sp, 1, 20, 2, {{"accuracy", Direction::Maximize}}), Error);
}

TEST_CASE("nsga2 front on a biobjective interval is mutually non-dominated") {
  space::SearchSpace line("line", {float_param("x", 0.0, 2.0, 1.0)});
  const std::vector<Objective> objs = {{"f1", Direction::Minimize}, {"f2", Direction::Minimize}};
  auto opt = make_nsga2(line, 11, 40, 8, objs);

  for (int round = 1; round <= 40; ++round) {
    const auto c = opt->propose();
    const double x = value_as_double(*c.find("x"));
    CHECK(x >= 0.0);
    CHECK(x <= 2.0);
    Observation o{c, {{"f1", x * x}, {"f2", (x - 2) * (x - 2)}}, round};
    opt->observe(o);
  }
  const auto front = opt->pareto_front();
  REQUIRE(front.has_value());
  CHECK(!front->points.empty());
  // Exhaustive pairwise scan: nothing on the front dominates anything else.
  for (const auto& a : front->points)
    for (const auto& b : front->points) CHECK(!dominates(a, b, objs));
}

TEST_CASE("nsga2 replays identically for a fixed seed") {
  const auto sp = unit_square();
  const std::vector<Objective> objs = {{"accuracy", Direction::Maximize}};
  auto run = [&](std::uint64_t seed) {
    harness::SphereEvaluator eval(sp, sp.size(), 1, 0.0);
    auto opt = make_nsga2(sp, seed, 24, 4, objs);
    std::vector<Observation> obs = drive(*opt, eval, 24);
    return obs;
  };
  const auto a = run(5);
  const auto b = run(5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].config == b[i].config);
    CHECK(a[i].objectives == b[i].objectives);
  }
}

TEST_CASE("nsga2 proposals validate and respect the evaluation budget") {
  const auto sp = resnet();
  auto opt = make_nsga2(sp, 3, 24, 4, {{"accuracy", Direction::Maximize}});
  harness::SphereEvaluator eval(sp, sp.size(), 3, 0.0);
  const auto obs = drive(*opt, eval, 24);
  CHECK(obs.size() == 24);
  for (const auto& o : obs) CHECK(space::validate(sp, o.config).valid());
}

TEST_CASE("dominance and the exhaustive front oracle agree on hand-built points") {
  const std::vector<Objective> objs = {{"acc", Direction::Maximize},
                                       {"lat", Direction::Minimize}};
  auto mk = [](double acc, double lat) {
    Observation o;
    o.objectives = {{"acc", acc}, {"lat", lat}};
    return o;
  };
  const auto a = mk(0.9, 10.0);
  const auto b = mk(0.8, 12.0);  // dominated by a
  const auto c = mk(0.95, 15.0);
  CHECK(dominates(a, b, objs));
  CHECK(!dominates(a, c, objs));
  const auto front = non_dominated({a, b, c}, objs);
  CHECK(front.size() == 2);
}

TEST_CASE("agent optimizer runs the mock loop with a descending budget line") {
  const auto sp = resnet();
  auto backend = agent::make_coordinate_descent_backend(sp, 21);
  prompt::StaticPromptOptions opts;
  const auto stat = prompt::render_static(sp, nullptr, {}, opts);

  AgentOptimizerConfig cfg;
  cfg.backend = backend.get();
  cfg.static_prompt = stat;
  cfg.space = sp;
  cfg.budget = 10;
  auto opt = make_agent_optimizer(std::move(cfg));

  harness::SphereEvaluator eval(sp, sp.size(), 2, 0.0);
  for (int round = 1; round <= 10; ++round) {
    const auto c = opt->propose();
    CHECK(opt->last_rounds_left() == 10 - round + 1);
    CHECK(opt->last_meta().attempts == 1);
    CHECK(space::validate(sp, c).valid());
    if (round == 1) CHECK(c == space::default_config(sp));
    opt->observe({c, eval.evaluate(c).values, round});
  }
  CHECK(opt->history().size() == 10);
}

TEST_CASE("agent optimizer with a scripted backend yields the scripted configs in order") {
  const auto sp = resnet();
  const std::vector<std::string> script = {
      R"(Use defaults first: {"learning_rate": 0.01, "batch_size": 128, "weight_decay": 0.0005,
         "momentum": 0.9, "num_epochs": 12})",
      R"(Next: {"learning_rate": 0.004, "batch_size": 170, "weight_decay": 0.0009,
         "momentum": 0.9, "num_epochs": 12})",
      R"(Then: {"learning_rate": 0.006, "batch_size": 160, "weight_decay": 0.0007,
         "momentum": 0.9, "num_epochs": 12})"};
  auto backend = agent::make_scripted_backend(script);

  AgentOptimizerConfig cfg;
  cfg.backend = backend.get();
  cfg.static_prompt = prompt::render_static(sp, nullptr, {}, {});
  cfg.space = sp;
  cfg.budget = 3;
  auto opt = make_agent_optimizer(std::move(cfg));

  std::vector<double> lrs;
  for (int round = 1; round <= 3; ++round) {
    const auto c = opt->propose();
    lrs.push_back(value_as_double(*c.find("learning_rate")));
    opt->observe({c, {{"accuracy", 0.89}}, round});
  }
  CHECK(lrs == std::vector<double>{0.01, 0.004, 0.006});
}

TEST_CASE("all five optimizers propose valid configurations over many seeds") {
  const auto sp = resnet();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    harness::SphereEvaluator eval(sp, sp.size(), seed, 0.0);
    std::vector<std::unique_ptr<Optimizer>> opts;
    opts.push_back(make_random_search(sp, seed, 8));
    opts.push_back(make_local_search(sp, seed, 8, {"accuracy", Direction::Maximize}));
    opts.push_back(make_bayesian_opt(sp, seed, 8, 2, {"accuracy", Direction::Maximize}));
    opts.push_back(make_nsga2(sp, seed, 8, 4, {{"accuracy", Direction::Maximize}}));
    auto backend = agent::make_coordinate_descent_backend(sp, seed);
    AgentOptimizerConfig cfg;
    cfg.backend = backend.get();
    cfg.static_prompt = prompt::render_static(sp, nullptr, {}, {});
    cfg.space = sp;
    cfg.budget = 8;
    opts.push_back(make_agent_optimizer(std::move(cfg)));

    for (auto& opt : opts) {
      harness::SphereEvaluator fresh(sp, sp.size(), seed, 0.0);
      const auto obs = drive(*opt, fresh, 8);
      CHECK(obs.size() == 8);
      for (const auto& o : obs) CHECK(space::validate(sp, o.config).valid());
    }
  }
}
