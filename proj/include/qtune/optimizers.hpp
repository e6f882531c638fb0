#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qtune/agent.hpp"
#include "qtune/errors.hpp"
#include "qtune/prompt.hpp"
#include "qtune/search_space.hpp"

namespace qtune::optimizers {

enum class Direction { Maximize, Minimize };

Direction direction_from_name(const std::string& name);
std::string direction_name(Direction d);

struct Objective {
  std::string name;
  Direction direction = Direction::Maximize;
};

struct Observation {
  space::Configuration config;
  std::map<std::string, double> objectives;
  int round = 0;
};

struct ParetoFront {
  std::vector<Observation> points;
};

/// a dominates b: no worse on every objective, strictly better somewhere.
bool dominates(const Observation& a, const Observation& b, const std::vector<Objective>& objs);

/// Exhaustive pairwise scan; the independent oracle for front checks.
std::vector<Observation> non_dominated(const std::vector<Observation>& points,
                                       const std::vector<Objective>& objs);

/// Sequential propose/observe state machine with a fixed round budget.
/// propose() for round i+1 may depend only on the first i observations.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  const std::string& name() const { return name_; }
  int budget() const { return budget_; }

  virtual space::Configuration propose() = 0;
  virtual void observe(const Observation& obs) = 0;

  /// Populated by multi-objective implementations.
  virtual std::optional<ParetoFront> pareto_front() const { return std::nullopt; }

 protected:
  Optimizer(std::string name, int budget) : name_(std::move(name)), budget_(budget) {
    if (budget < 1) throw Error("optimizer budget must be >= 1");
  }

 private:
  std::string name_;
  int budget_;
};

/// i.i.d. space.sample with per-round derived seeds; ignores observations.
std::unique_ptr<Optimizer> make_random_search(const space::SearchSpace& sp, std::uint64_t seed,
                                              int budget);

/// Round one proposes the defaults; afterwards perturbs one parameter of the
/// best-so-far configuration by one step, keeping the move only on improvement.
std::unique_ptr<Optimizer> make_local_search(const space::SearchSpace& sp, std::uint64_t seed,
                                             int budget, Objective primary);

/// Random init, then a Matern-5/2 GP over the unit cube with expected
/// improvement maximized by random multi-start over 1024 candidates. A
/// constant-objective model falls back to random proposals (recorded, not
/// fatal).
std::unique_ptr<Optimizer> make_bayesian_opt(const space::SearchSpace& sp, std::uint64_t seed,
                                             int budget, int init_rounds, Objective primary);

/// NSGA-II on unit-cube encodings (non-dominated sorting, crowding distance,
/// binary tournament, SBX crossover, polynomial mutation). The budget counts
/// evaluations; throws BudgetTooSmallError when budget < 2 * population.
std::unique_ptr<Optimizer> make_nsga2(const space::SearchSpace& sp, std::uint64_t seed, int budget,
                                      int population, std::vector<Objective> objectives);

struct AgentOptimizerConfig {
  agent::ChatBackend* backend = nullptr;  // not owned
  /// Alternative to `backend`: the optimizer keeps this one alive itself.
  std::shared_ptr<agent::ChatBackend> owned_backend;
  prompt::StaticPrompt static_prompt;
  space::SearchSpace space;
  prompt::HistoryPolicy history;
  int budget = 10;
  int token_cap = 16000;
  agent::RetryPolicy retry;
  agent::UsageLedger* ledger = nullptr;  // optional, not owned
};

struct ProposalMeta {
  int attempts = 0;
  bool repaired = false;
  std::string raw_text;
  std::optional<std::string> thought_text;
};

class AgentOptimizer : public Optimizer {
 public:
  explicit AgentOptimizer(AgentOptimizerConfig cfg);

  space::Configuration propose() override;
  void observe(const Observation& obs) override;

  const ProposalMeta& last_meta() const { return last_meta_; }
  const std::vector<TrialRecord>& history() const { return history_; }
  int last_rounds_left() const { return last_rounds_left_; }

 private:
  AgentOptimizerConfig cfg_;
  agent::UsageLedger own_ledger_;
  std::vector<TrialRecord> history_;
  ProposalMeta last_meta_;
  int last_rounds_left_ = 0;
};

std::unique_ptr<AgentOptimizer> make_agent_optimizer(AgentOptimizerConfig cfg);

/// Running optimum per round. Throws UnknownObjectiveError when an
/// observation lacks the objective.
std::vector<double> best_so_far(const std::vector<Observation>& observations,
                                const std::string& objective, Direction direction);

}  // namespace qtune::optimizers
