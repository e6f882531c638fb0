#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "qtune/optimizers.hpp"

namespace qtune::optimizers {

namespace {

struct Individual {
  std::vector<double> genes;  // unit-cube encoding
  std::map<std::string, double> objectives;
  bool evaluated = false;
  int rank = 0;
  double crowding = 0.0;
};

class Nsga2 : public Optimizer {
 public:
  Nsga2(const space::SearchSpace& sp, std::uint64_t seed, int budget, int population,
        std::vector<Objective> objectives)
      : Optimizer("nsga2", budget),
        space_(sp),
        rng_(seed),
        population_(population),
        objectives_(std::move(objectives)) {
    if (population_ < 4 || population_ % 2 != 0)
      throw Error("nsga2 population must be even and >= 4");
    if (budget < 2 * population_)
      throw BudgetTooSmallError("nsga2 budget " + std::to_string(budget) +
                                " is below 2 * population (" + std::to_string(2 * population_) +
                                ")");
    if (objectives_.empty()) throw Error("nsga2 requires at least one objective");
    for (int i = 0; i < population_; ++i) {
      Individual ind;
      ind.genes = random_genes();
      pending_.push_back(ind);
    }
  }

  space::Configuration propose() override {
    if (pending_.empty()) breed();
    in_flight_ = pending_.front();
    pending_.erase(pending_.begin());
    return space::denormalize(space_, in_flight_.genes);
  }

  void observe(const Observation& obs) override {
    Individual ind = in_flight_;
    // Re-encode from the observed configuration so rounded integers and
    // categorical snapping stay consistent with what was actually evaluated.
    ind.genes = space::normalize(space_, obs.config);
    ind.objectives = obs.objectives;
    ind.evaluated = true;
    evaluated_.push_back(ind);
    all_observations_.push_back(obs);
    if (static_cast<int>(evaluated_.size()) >= population_ && parents_.empty()) {
      parents_ = evaluated_;
      evaluated_.clear();
      assign_fronts(parents_);
    } else if (static_cast<int>(evaluated_.size()) >= population_) {
      environmental_selection();
    }
  }

  std::optional<ParetoFront> pareto_front() const override {
    ParetoFront f;
    f.points = non_dominated(all_observations_, objectives_);
    return f;
  }

 private:
  std::vector<double> random_genes() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> g(space_.size());
    for (auto& v : g) v = u(rng_);
    return g;
  }

  bool ind_dominates(const Individual& a, const Individual& b) const {
    bool better = false;
    for (const auto& o : objectives_) {
      const double va = a.objectives.at(o.name);
      const double vb = b.objectives.at(o.name);
      const bool a_better = o.direction == Direction::Maximize ? va > vb : va < vb;
      const bool b_better = o.direction == Direction::Maximize ? vb > va : vb < va;
      if (b_better) return false;
      if (a_better) better = true;
    }
    return better;
  }

  void assign_fronts(std::vector<Individual>& pool) const {
    const std::size_t n = pool.size();
    std::vector<int> dominated_by(n, 0);
    std::vector<std::vector<std::size_t>> dominates_list(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (ind_dominates(pool[i], pool[j]))
          dominates_list[i].push_back(j);
        else if (ind_dominates(pool[j], pool[i]))
          ++dominated_by[i];
      }
    std::vector<std::size_t> current;
    for (std::size_t i = 0; i < n; ++i)
      if (dominated_by[i] == 0) {
        pool[i].rank = 0;
        current.push_back(i);
      }
    int rank = 0;
    while (!current.empty()) {
      std::vector<std::size_t> next;
      for (std::size_t i : current)
        for (std::size_t j : dominates_list[i])
          if (--dominated_by[j] == 0) {
            pool[j].rank = rank + 1;
            next.push_back(j);
          }
      ++rank;
      current = std::move(next);
    }
    assign_crowding(pool);
  }

  void assign_crowding(std::vector<Individual>& pool) const {
    for (auto& ind : pool) ind.crowding = 0.0;
    int max_rank = 0;
    for (const auto& ind : pool) max_rank = std::max(max_rank, ind.rank);
    for (int r = 0; r <= max_rank; ++r) {
      std::vector<std::size_t> front;
      for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].rank == r) front.push_back(i);
      if (front.size() <= 2) {
        for (std::size_t i : front) pool[i].crowding = std::numeric_limits<double>::infinity();
        continue;
      }
      for (const auto& o : objectives_) {
        std::sort(front.begin(), front.end(), [&](std::size_t a, std::size_t b) {
          return pool[a].objectives.at(o.name) < pool[b].objectives.at(o.name);
        });
        const double lo = pool[front.front()].objectives.at(o.name);
        const double hi = pool[front.back()].objectives.at(o.name);
        pool[front.front()].crowding = std::numeric_limits<double>::infinity();
        pool[front.back()].crowding = std::numeric_limits<double>::infinity();
        if (hi == lo) continue;
        for (std::size_t k = 1; k + 1 < front.size(); ++k)
          pool[front[k]].crowding += (pool[front[k + 1]].objectives.at(o.name) -
                                      pool[front[k - 1]].objectives.at(o.name)) /
                                     (hi - lo);
      }
    }
  }

  const Individual& tournament() {
    const auto pick = [&]() -> const Individual& {
      std::uniform_int_distribution<std::size_t> d(0, parents_.size() - 1);
      return parents_[d(rng_)];
    };
    const Individual& a = pick();
    const Individual& b = pick();
    if (a.rank != b.rank) return a.rank < b.rank ? a : b;
    return a.crowding >= b.crowding ? a : b;
  }

  void breed() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    constexpr double kEtaCrossover = 15.0;
    constexpr double kEtaMutation = 20.0;
    constexpr double kCrossoverProb = 0.9;
    const double mutation_prob = 1.0 / static_cast<double>(std::max<std::size_t>(1, space_.size()));

    while (static_cast<int>(pending_.size()) < population_) {
      std::vector<double> c1 = tournament().genes;
      std::vector<double> c2 = tournament().genes;
      if (u(rng_) < kCrossoverProb) {
        for (std::size_t i = 0; i < c1.size(); ++i) {
          if (u(rng_) > 0.5) continue;
          const double x1 = c1[i], x2 = c2[i];
          const double r = u(rng_);
          const double beta = r <= 0.5 ? std::pow(2.0 * r, 1.0 / (kEtaCrossover + 1.0))
                                       : std::pow(1.0 / (2.0 * (1.0 - r)),
                                                  1.0 / (kEtaCrossover + 1.0));
          c1[i] = std::clamp(0.5 * ((1 + beta) * x1 + (1 - beta) * x2), 0.0, 1.0);
          c2[i] = std::clamp(0.5 * ((1 - beta) * x1 + (1 + beta) * x2), 0.0, 1.0);
        }
      }
      for (auto* child : {&c1, &c2}) {
        for (auto& g : *child) {
          if (u(rng_) > mutation_prob) continue;
          const double r = u(rng_);
          const double delta = r < 0.5
                                   ? std::pow(2.0 * r, 1.0 / (kEtaMutation + 1.0)) - 1.0
                                   : 1.0 - std::pow(2.0 * (1.0 - r), 1.0 / (kEtaMutation + 1.0));
          g = std::clamp(g + delta, 0.0, 1.0);
        }
        Individual ind;
        ind.genes = *child;
        pending_.push_back(std::move(ind));
      }
    }
    pending_.resize(population_);
  }

  void environmental_selection() {
    std::vector<Individual> pool = parents_;
    pool.insert(pool.end(), evaluated_.begin(), evaluated_.end());
    evaluated_.clear();
    assign_fronts(pool);
    std::stable_sort(pool.begin(), pool.end(), [](const Individual& a, const Individual& b) {
      if (a.rank != b.rank) return a.rank < b.rank;
      return a.crowding > b.crowding;
    });
    pool.resize(population_);
    parents_ = std::move(pool);
    assign_fronts(parents_);
  }

  space::SearchSpace space_;
  std::mt19937_64 rng_;
  int population_;
  std::vector<Objective> objectives_;
  std::vector<Individual> pending_;
  Individual in_flight_;
  std::vector<Individual> evaluated_;
  std::vector<Individual> parents_;
  std::vector<Observation> all_observations_;
};

}  // namespace

std::unique_ptr<Optimizer> make_nsga2(const space::SearchSpace& sp, std::uint64_t seed, int budget,
                                      int population, std::vector<Objective> objectives) {
  return std::make_unique<Nsga2>(sp, seed, budget, population, std::move(objectives));
}

}  // namespace qtune::optimizers
