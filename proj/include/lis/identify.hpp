#pragma once

// Least-squares identification of parameters from a measured discharge:
// J = sum_k (V_sim(t_k) - V_m,k)^2 + alpha (T_sim - T)^2 over the first N_min
// measured samples, minimized by particle swarm.

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lis/dae.hpp"
#include "lis/errors.hpp"
#include "lis/pso.hpp"

namespace lis {

class InvalidTheta : public Error {
 public:
  using Error::Error;
};

class AllFailed : public Error {
 public:
  using Error::Error;
};

struct ExperimentalTrace {
  Eigen::VectorXd t;  // s, strictly increasing
  Eigen::VectorXd V;  // V
  double current = 0;       // A, as applied
  double current_bias = 0;  // A, added to `current`
  std::map<std::string, std::string> meta;
  // Set when the voltage rises between more than 5% of consecutive samples,
  // a hint that charge segments are mixed in.
  bool rising_voltage_warning = false;

  std::size_t size() const { return static_cast<std::size_t>(t.size()); }
  double effective_current() const { return current + current_bias; }
  double duration() const { return t.size() ? t(t.size() - 1) : 0.0; }
};

/// Throws ValidationError naming the violated invariant.
void validate(const ExperimentalTrace& data);

struct LoadOptions {
  std::optional<double> current;  // overrides an I_A column
  double current_bias = 0;
};

/// Reads `t_s,V[,I_A]` CSV. ParseError / ValidationError carry the line.
ExperimentalTrace load_experiment(const std::filesystem::path& path, const LoadOptions& options = {});

void write_experiment_csv(const std::filesystem::path& path, const ExperimentalTrace& data);

/// Measurement-like data from a simulation: V sampled every
/// `sample_interval` seconds plus the final time, with Gaussian noise.
struct SyntheticSpec {
  ModelId model = ModelId::M3;
  ParameterSet params;         // model scale
  double current = 0.03e-3;    // A, prototype scale
  double mu = 1.0;
  double sample_interval = 30; // s
  double noise_sd = 0;         // V
  std::uint64_t seed = 42;
  SimulationConfig sim;        // `current` is overridden
};

ExperimentalTrace synthesize_experiment(const SyntheticSpec& spec);

struct ThetaEntry {
  std::string path;
  double lower = 0;
  double upper = 0;
};

/// E0[1..p] within +-0.2 V of `nominal`, gamma in [0.1, 3], omega in
/// [0.01, 2] /g, m0[S8] in [0.5, 6] g.
std::vector<ThetaEntry> default_theta(ModelId model, const ParameterSet& nominal);

/// Bounds file: one `path = lower, upper` per line, `#` comments.
std::vector<ThetaEntry> parse_bounds(std::string_view text);
std::vector<ThetaEntry> read_bounds(const std::filesystem::path& path);

/// N (10 mV)^2 / T^2: a duration miss of T costs as much as a uniform 10 mV
/// voltage error.
double default_alpha(const ExperimentalTrace& data);

/// Integrator settings for objective evaluations: rtol 1e-5, atol 1e-8. The
/// swarm needs ~15k evaluations per fit; at these tolerances the voltage error
/// stays well under the noise of a measurement.
inline SimulationConfig default_fit_simulation() {
  SimulationConfig c;
  c.rtol = 1e-5;
  c.atol = 1e-8;
  return c;
}

struct FitProblem {
  ModelId model = ModelId::M3;
  ExperimentalTrace data;          // prototype scale
  std::vector<ThetaEntry> theta;   // model scale
  ParameterSet fixed;              // model scale
  std::optional<double> alpha;     // V^2/s^2, default_alpha when absent
  double mu = 1.0;                 // model current = mu * data current
  PsoConfig pso;
  SimulationConfig sim = default_fit_simulation();  // `current` and `t_max` are set per evaluation
};

void validate(const FitProblem& problem);

/// Everything needed to recompute J.
struct Evaluation {
  double J = 0;
  bool failed = false;        // simulation failed, J is the penalty
  std::size_t n_min = 0;
  Eigen::VectorXd residuals;  // V_sim - V_m over the first n_min samples
  double duration_err = 0;    // |T_sim - T|, s
  double alpha = 0;
  SimulationTrace trace;
};

ParameterSet assemble(const FitProblem& problem, const Eigen::VectorXd& theta);

/// The simulation run for an objective evaluation: model-scale current, and a
/// horizon of 2T so that any completed run scores below the penalty.
SimulationConfig evaluation_config(const FitProblem& problem);

/// N (5 V)^2 + alpha T^2, larger than any J a finished simulation can reach.
double penalty(const FitProblem& problem);

Evaluation evaluate(const FitProblem& problem, const Eigen::VectorXd& theta);
double objective(const FitProblem& problem, const Eigen::VectorXd& theta);

struct FitResult {
  std::vector<std::string> paths;
  Eigen::VectorXd theta_hat;  // model scale
  ParameterSet params;        // fixed + theta_hat
  double J = 0;
  double rmse = 0;          // V, over n_min samples
  double duration_err = 0;  // s
  double alpha = 0;
  std::size_t n_min = 0;
  Eigen::VectorXd residuals;
  SimulationTrace trace;
  std::vector<double> history;
  std::size_t evaluations = 0;
  std::size_t failed_evaluations = 0;
};

/// Throws AllFailed when no evaluation produced a simulation.
FitResult fit(const FitProblem& problem);

/// theta.csv (model and prototype scale), summary.csv, history.csv,
/// best_trace.csv and fitted.params under `dir`. Returns the files written.
std::vector<std::filesystem::path> write_fit_report(const std::filesystem::path& dir, const FitProblem& problem,
                                                    const FitResult& result);

}  // namespace lis
