#pragma once

// Global-best particle swarm minimization over a box.
//
// Every particle owns its random stream, seeded from (seed, particle index),
// so a run is reproducible whatever the number of worker threads: the
// objective values of an iteration are gathered by index before the swarm
// bookkeeping runs.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

#include "lis/errors.hpp"
#include "lis/parallel.hpp"

namespace lis {

struct PsoConfig {
  std::size_t swarm_size = 50;
  std::size_t max_iters = 300;  // the initial evaluation counts as iteration 1
  double inertia = 0.72;
  double cognitive = 1.49;
  double social = 1.49;
  double v_max_fraction = 0.2;  // of each bound range
  std::uint64_t seed = 0;
  std::size_t stall_iters = 50;  // stop after this many iterations without improvement
  unsigned threads = 1;
};

inline void validate(const PsoConfig& c) {
  if (c.swarm_size < 2) throw ConfigError("PSO swarm size must be at least 2");
  if (c.max_iters < 1) throw ConfigError("PSO needs at least one iteration");
  if (!(c.inertia > 0 && c.inertia < 1)) throw ConfigError("PSO inertia must lie in (0, 1)");
  if (!(c.cognitive > 0) || !(c.social > 0)) throw ConfigError("PSO acceleration coefficients must be positive");
  if (!(c.v_max_fraction > 0)) throw ConfigError("PSO v_max fraction must be positive");
  if (c.stall_iters < 1) throw ConfigError("PSO stall patience must be at least 1");
}

struct PsoResult {
  Eigen::VectorXd best_x;
  double best_f = 0;
  std::vector<double> history;  // global best after each iteration
  std::size_t evaluations = 0;
};

template <class Objective>
PsoResult pso_minimize(Objective&& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                       const PsoConfig& config) {
  validate(config);
  const Eigen::Index dim = lower.size();
  if (upper.size() != dim || dim == 0 || !(upper.array() > lower.array()).all())
    throw ConfigError("PSO bounds must be non-empty with lower < upper");
  const std::size_t n = config.swarm_size;
  const Eigen::VectorXd range = upper - lower;
  const Eigen::VectorXd v_max = config.v_max_fraction * range;

  std::vector<std::mt19937_64> rng;
  rng.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(k)};
    rng.emplace_back(seq);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(n)), v(dim, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto c = static_cast<Eigen::Index>(k);
    for (Eigen::Index d = 0; d < dim; ++d) {
      x(d, c) = lower(d) + unit(rng[k]) * range(d);
      v(d, c) = (2 * unit(rng[k]) - 1) * v_max(d);
    }
  }

  std::vector<double> fx(n);
  auto evaluate = [&] {
    parallel_for(n, config.threads, [&](std::size_t k) { fx[k] = f(Eigen::VectorXd(x.col(static_cast<Eigen::Index>(k)))); });
  };

  PsoResult out;
  evaluate();
  out.evaluations = n;
  Eigen::MatrixXd pbest = x;
  std::vector<double> pbest_f = fx;
  std::size_t g = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (fx[k] < fx[g]) g = k;
  out.best_x = x.col(static_cast<Eigen::Index>(g));
  out.best_f = fx[g];
  out.history.push_back(out.best_f);

  std::size_t stall = 0;
  for (std::size_t iter = 1; iter < config.max_iters && stall < config.stall_iters; ++iter) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double r1 = unit(rng[k]), r2 = unit(rng[k]);
        double vel = config.inertia * v(d, c) + config.cognitive * r1 * (pbest(d, c) - x(d, c)) +
                     config.social * r2 * (out.best_x(d) - x(d, c));
        vel = std::clamp(vel, -v_max(d), v_max(d));
        double pos = x(d, c) + vel;
        // Reflect off the walls, reversing the velocity component.
        if (pos > upper(d)) {
          pos = upper(d) - (pos - upper(d));
          vel = -vel;
        } else if (pos < lower(d)) {
          pos = lower(d) + (lower(d) - pos);
          vel = -vel;
        }
        x(d, c) = std::clamp(pos, lower(d), upper(d));
        v(d, c) = vel;
      }
    }
    evaluate();
    out.evaluations += n;
    const double before = out.best_f;
    for (std::size_t k = 0; k < n; ++k) {
      const auto c = static_cast<Eigen::Index>(k);
      if (fx[k] < pbest_f[k]) {
        pbest_f[k] = fx[k];
        pbest.col(c) = x.col(c);
      }
      if (fx[k] < out.best_f) {
        out.best_f = fx[k];
        out.best_x = x.col(c);
      }
    }
    stall = out.best_f < before ? 0 : stall + 1;
    out.history.push_back(out.best_f);
  }
  return out;
}

}  // namespace lis
