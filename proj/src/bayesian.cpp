#include <algorithm>
#include <cmath>
#include <random>

#include "qtune/optimizers.hpp"

namespace qtune::optimizers {

namespace {

// Dense Cholesky solve; the GP stays small (budget-sized), so O(n^3) is free.
class CholeskySolver {
 public:
  // Returns false when the matrix is not positive definite.
  bool factor(std::vector<double> a, std::size_t n) {
    n_ = n;
    l_ = std::move(a);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double sum = l_[i * n_ + j];
        for (std::size_t k = 0; k < j; ++k) sum -= l_[i * n_ + k] * l_[j * n_ + k];
        if (i == j) {
          if (sum <= 0.0) return false;
          l_[i * n_ + j] = std::sqrt(sum);
        } else {
          l_[i * n_ + j] = sum / l_[j * n_ + j];
        }
      }
      for (std::size_t j = i + 1; j < n_; ++j) l_[i * n_ + j] = 0.0;
    }
    return true;
  }

  std::vector<double> solve(std::vector<double> b) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double sum = b[i];
      for (std::size_t k = 0; k < i; ++k) sum -= l_[i * n_ + k] * b[k];
      b[i] = sum / l_[i * n_ + i];
    }
    for (std::size_t i = n_; i-- > 0;) {
      double sum = b[i];
      for (std::size_t k = i + 1; k < n_; ++k) sum -= l_[k * n_ + i] * b[k];
      b[i] = sum / l_[i * n_ + i];
    }
    return b;
  }

  std::vector<double> solve_lower(std::vector<double> b) const {
    for (std::size_t i = 0; i < n_; ++i) {
      double sum = b[i];
      for (std::size_t k = 0; k < i; ++k) sum -= l_[i * n_ + k] * b[k];
      b[i] = sum / l_[i * n_ + i];
    }
    return b;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> l_;
};

double matern52(double r, double length) {
  const double s = std::sqrt(5.0) * r / length;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

class BayesianOpt : public Optimizer {
 public:
  BayesianOpt(const space::SearchSpace& sp, std::uint64_t seed, int budget, int init_rounds,
              Objective primary)
      : Optimizer("bayes", budget),
        space_(sp),
        seed_(seed),
        init_rounds_(init_rounds),
        primary_(std::move(primary)) {
    if (init_rounds < 1 || init_rounds >= budget)
      throw Error("bayesian optimizer requires 1 <= init_rounds < budget");
  }

  space::Configuration propose() override {
    ++round_;
    if (round_ <= static_cast<std::uint64_t>(init_rounds_) || x_.empty()) return random_config();

    const std::size_t n = x_.size();
    double mean = 0.0;
    for (double v : y_) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y_) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (var == 0.0) {
      // Degenerate (constant) objective: the GP is singular, fall back.
      ++singular_fallbacks_;
      return random_config();
    }
    const double sd = std::sqrt(var);

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = (y_[i] - mean) / sd;
      if (primary_.direction == Direction::Minimize) y[i] = -y[i];
    }

    const double length = 0.3 * std::sqrt(static_cast<double>(std::max<std::size_t>(1, dim())));
    CholeskySolver chol;
    double jitter = 1e-6;
    bool ok = false;
    for (int attempt = 0; attempt < 5 && !ok; ++attempt, jitter *= 10.0) {
      std::vector<double> k(n * n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          k[i * n + j] = matern52(distance(x_[i], x_[j]), length) + (i == j ? jitter : 0.0);
      ok = chol.factor(std::move(k), n);
    }
    if (!ok) {
      ++singular_fallbacks_;
      return random_config();
    }

    const std::vector<double> alpha = chol.solve(y);
    const double y_best = *std::max_element(y.begin(), y.end());

    space::Configuration best_cfg = random_config();
    double best_ei = -1.0;
    constexpr int kCandidates = 1024;
    for (int c = 0; c < kCandidates; ++c) {
      space::Configuration cand =
          space::sample(space_, space::derive_seed(seed_, round_ * 100000ULL + c));
      const std::vector<double> z = space::normalize(space_, cand);
      std::vector<double> ks(n);
      for (std::size_t i = 0; i < n; ++i) ks[i] = matern52(distance(z, x_[i]), length);
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += ks[i] * alpha[i];
      const std::vector<double> v = chol.solve_lower(ks);
      double kss = 1.0;
      for (std::size_t i = 0; i < n; ++i) kss -= v[i] * v[i];
      const double sigma = std::sqrt(std::max(kss, 1e-12));

      constexpr double kXi = 0.01;
      const double improve = mu - y_best - kXi;
      const double zscore = improve / sigma;
      const double ei = improve * norm_cdf(zscore) + sigma * norm_pdf(zscore);
      if (ei > best_ei) {
        best_ei = ei;
        best_cfg = std::move(cand);
      }
    }
    return best_cfg;
  }

  void observe(const Observation& obs) override {
    x_.push_back(space::normalize(space_, obs.config));
    y_.push_back(obs.objectives.count(primary_.name) ? obs.objectives.at(primary_.name) : 0.0);
  }

  int singular_fallbacks() const { return singular_fallbacks_; }

 private:
  std::size_t dim() const { return space_.size(); }

  space::Configuration random_config() {
    return space::sample(space_, space::derive_seed(seed_ ^ 0x5bd1e995ULL, round_));
  }

  static double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }

  space::SearchSpace space_;
  std::uint64_t seed_;
  int init_rounds_;
  Objective primary_;
  std::uint64_t round_ = 0;
  int singular_fallbacks_ = 0;
  std::vector<std::vector<double>> x_;
  std::vector<double> y_;
};

}  // namespace

std::unique_ptr<Optimizer> make_bayesian_opt(const space::SearchSpace& sp, std::uint64_t seed,
                                             int budget, int init_rounds, Objective primary) {
  return std::make_unique<BayesianOpt>(sp, seed, budget, init_rounds, std::move(primary));
}

}  // namespace qtune::optimizers
