#include "qtune/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace qtune::optimizers {

Direction direction_from_name(const std::string& name) {
  if (name == "maximize" || name == "max") return Direction::Maximize;
  if (name == "minimize" || name == "min") return Direction::Minimize;
  throw SchemaError("unknown objective direction: '" + name + "'");
}

std::string direction_name(Direction d) {
  return d == Direction::Maximize ? "maximize" : "minimize";
}

namespace {

double objective_value(const Observation& obs, const std::string& name) {
  auto it = obs.objectives.find(name);
  if (it == obs.objectives.end())
    throw UnknownObjectiveError("observation at round " + std::to_string(obs.round) +
                                " has no objective '" + name + "'");
  return it->second;
}

bool improves(double candidate, double incumbent, Direction d) {
  return d == Direction::Maximize ? candidate > incumbent : candidate < incumbent;
}

}  // namespace

bool dominates(const Observation& a, const Observation& b, const std::vector<Objective>& objs) {
  bool strictly_better = false;
  for (const auto& o : objs) {
    const double va = objective_value(a, o.name);
    const double vb = objective_value(b, o.name);
    if (improves(vb, va, o.direction)) return false;
    if (improves(va, vb, o.direction)) strictly_better = true;
  }
  return strictly_better;
}

std::vector<Observation> non_dominated(const std::vector<Observation>& points,
                                       const std::vector<Objective>& objs) {
  std::vector<Observation> front;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (std::size_t j = 0; j < points.size() && !dominated; ++j)
      if (i != j && dominates(points[j], points[i], objs)) dominated = true;
    if (!dominated) front.push_back(points[i]);
  }
  return front;
}

std::vector<double> best_so_far(const std::vector<Observation>& observations,
                                const std::string& objective, Direction direction) {
  if (observations.empty()) throw Error("best_so_far requires at least one observation");
  std::vector<double> trace;
  trace.reserve(observations.size());
  double best = objective_value(observations.front(), objective);
  for (const auto& obs : observations) {
    const double v = objective_value(obs, objective);
    if (improves(v, best, direction)) best = v;
    trace.push_back(best);
  }
  return trace;
}

namespace {

class RandomSearch : public Optimizer {
 public:
  RandomSearch(const space::SearchSpace& sp, std::uint64_t seed, int budget)
      : Optimizer("random", budget), space_(sp), seed_(seed) {}

  space::Configuration propose() override {
    return space::sample(space_, space::derive_seed(seed_, round_++));
  }
  void observe(const Observation&) override {}

 private:
  space::SearchSpace space_;
  std::uint64_t seed_;
  std::uint64_t round_ = 0;
};

class LocalSearch : public Optimizer {
 public:
  LocalSearch(const space::SearchSpace& sp, std::uint64_t seed, int budget, Objective primary)
      : Optimizer("local", budget), space_(sp), rng_(seed), primary_(std::move(primary)) {}

  space::Configuration propose() override {
    if (!incumbent_) {
      last_proposal_ = space::default_config(space_);
      return *last_proposal_;
    }
    last_proposal_ = perturb_one(*incumbent_);
    return *last_proposal_;
  }

  void observe(const Observation& obs) override {
    const double v = objective_value(obs, primary_.name);
    if (!incumbent_ || improves(v, incumbent_value_, primary_.direction)) {
      incumbent_ = obs.config;
      incumbent_value_ = v;
    }
  }

 private:
  space::Configuration perturb_one(const space::Configuration& base) {
    space::Configuration out = base;
    // Pick a coordinate that can actually move.
    for (int tries = 0; tries < 64; ++tries) {
      const auto& p = space_.params()[rng_() % space_.size()];
      const double dir = (rng_() & 1) ? 1.0 : -1.0;
      Value moved = step(p, *base.find(p.name), dir);
      if (value_equal(moved, *base.find(p.name))) moved = step(p, *base.find(p.name), -dir);
      if (!value_equal(moved, *base.find(p.name))) {
        out.set(p.name, moved);
        return out;
      }
    }
    return out;
  }

  Value step(const space::ParamSpec& p, const Value& cur, double dir) const {
    switch (p.kind) {
      case space::ParamKind::UniformFloat: {
        double x = value_as_double(cur);
        if (p.log_scale) {
          const double s = 0.1 * (std::log(p.upper) - std::log(p.lower));
          x = std::exp(std::log(x) + dir * s);
        } else {
          x += dir * 0.1 * (p.upper - p.lower);
        }
        return std::max(p.lower, std::min(p.upper, x));
      }
      case space::ParamKind::UniformInt: {
        auto x = static_cast<std::int64_t>(std::llround(value_as_double(cur)));
        x += static_cast<std::int64_t>(dir);
        x = std::max<std::int64_t>(static_cast<std::int64_t>(p.lower),
                                   std::min<std::int64_t>(static_cast<std::int64_t>(p.upper), x));
        return x;
      }
      case space::ParamKind::Categorical: {
        std::size_t i = 0;
        for (std::size_t k = 0; k < p.choices.size(); ++k)
          if (value_equal(p.choices[k], cur)) i = k;
        const auto n = static_cast<std::ptrdiff_t>(p.choices.size());
        auto j = static_cast<std::ptrdiff_t>(i) + (dir > 0 ? 1 : -1);
        j = std::max<std::ptrdiff_t>(0, std::min(n - 1, j));
        return p.choices[static_cast<std::size_t>(j)];
      }
    }
    return cur;
  }

  space::SearchSpace space_;
  std::mt19937_64 rng_;
  Objective primary_;
  std::optional<space::Configuration> incumbent_;
  double incumbent_value_ = 0.0;
  std::optional<space::Configuration> last_proposal_;
};

}  // namespace

std::unique_ptr<Optimizer> make_random_search(const space::SearchSpace& sp, std::uint64_t seed,
                                              int budget) {
  return std::make_unique<RandomSearch>(sp, seed, budget);
}

std::unique_ptr<Optimizer> make_local_search(const space::SearchSpace& sp, std::uint64_t seed,
                                             int budget, Objective primary) {
  return std::make_unique<LocalSearch>(sp, seed, budget, std::move(primary));
}

AgentOptimizer::AgentOptimizer(AgentOptimizerConfig cfg) : Optimizer("agent", cfg.budget) {
  if (cfg.backend == nullptr && cfg.owned_backend != nullptr)
    cfg.backend = cfg.owned_backend.get();
  if (cfg.backend == nullptr) throw Error("agent optimizer requires a backend");
  cfg_ = std::move(cfg);
}

space::Configuration AgentOptimizer::propose() {
  last_rounds_left_ = budget() - static_cast<int>(history_.size());
  prompt::DynamicPrompt dyn =
      prompt::render_dynamic(history_, last_rounds_left_, cfg_.history);
  prompt::PromptBundle bundle = prompt::assemble(cfg_.static_prompt, dyn, cfg_.token_cap);
  agent::UsageLedger& ledger = cfg_.ledger != nullptr ? *cfg_.ledger : own_ledger_;
  agent::Proposal p = agent::propose(*cfg_.backend, bundle, cfg_.space, agent::Expect::Finetune,
                                     cfg_.retry, ledger);
  last_meta_ = {p.attempts, p.repaired, p.raw_text, p.thought_text};
  return *p.finetune;
}

void AgentOptimizer::observe(const Observation& obs) {
  TrialRecord t;
  t.round = obs.round;
  t.config = obs.config;
  t.objectives = obs.objectives;
  t.agent_attempts = last_meta_.attempts;
  t.repaired = last_meta_.repaired;
  if (last_meta_.thought_text) t.notes = *last_meta_.thought_text;
  history_.push_back(std::move(t));
}

std::unique_ptr<AgentOptimizer> make_agent_optimizer(AgentOptimizerConfig cfg) {
  return std::make_unique<AgentOptimizer>(std::move(cfg));
}

}  // namespace qtune::optimizers
