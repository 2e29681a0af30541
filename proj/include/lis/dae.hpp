#pragma once

// Constant-current discharge of the zero-dimensional cathode model.
//
// The state (dissolved masses, precipitate mass, relative porosity) evolves
// by reaction and precipitation; the cell voltage is the unique V at which the
// Butler-Volmer currents of all reactions add up to the applied current.

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "lis/model.hpp"

namespace lis {

struct SimulationConfig {
  double current = 1.0;    // A, positive = discharge
  double t_max = 40000;    // s
  double v_cutoff = 1.5;   // V
  double eps_min = 1e-3;
  double rtol = 1e-6;
  // Absolute tolerance. For masses it is relative to the initial sulfur
  // inventory, which keeps the step sequence invariant under mass scaling.
  // V follows ln m, so nearly depleted species need a tight floor here for
  // V(t) to converge with rtol.
  double atol = 1e-12;
  double dt_init = 1e-3;   // s
  double dt_max = 20;      // s
  double dt_min = 1e-10;   // s, below this the run is a SolverFailure
  double constraint_tol = 1e-9;  // A
  std::size_t max_steps = 2'000'000;
  // Steps are shortened to land exactly on these times (ascending, s).
  std::vector<double> output_times;
};

void validate(const SimulationConfig& config);

struct AlgebraicOutputs {
  double V = 0;        // cell voltage
  SpeciesVector E;    // reduction potentials
  SpeciesVector eta;  // overpotentials, V - E
  SpeciesVector i_r;  // reaction currents, A
  double a_v = 0;      // active area, m^2
};

struct StateRate {
  SpeciesVector dm;
  double dm_Sp = 0;
  double deps = 0;
};

/// Integrator state [m_1..m_q, m_Sp, eps] and its Jacobian.
using StateVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxSpecies + 2, 1>;
using StateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxSpecies + 2, kMaxSpecies + 2>;

/// Lower bound on dissolved concentration used inside logarithms and ratios.
inline constexpr double kConcentrationFloor = 1e-12;  // mol/L

/// Precomputed per-parameter-set coefficients shared by the algebraic layer
/// and the integrator.
class Kinetics {
 public:
  Kinetics(const ReactionModel& model, const ParameterSet& params);

  const ReactionModel& model() const { return *model_; }
  const ParameterSet& params() const { return *params_; }

  /// Mass below which species i is clamped (kConcentrationFloor in g).
  double mass_floor(Eigen::Index i) const { return mass_floor_(i); }

  /// A reaction is blocked when one of its reactants is at or below the
  /// floor; a blocked reaction may run in oxidation but carries no reduction
  /// current.
  ReactionFlags blocked_reactions(const SpeciesVector& m) const;

  /// E_j at the given dissolved masses.
  SpeciesVector reduction_potentials(const SpeciesVector& m) const;

  /// Solves sum_j i_j(V) = current for V. `guess` warm-starts Newton.
  AlgebraicOutputs solve(const CellState& state, double current, double constraint_tol,
                         std::optional<double> guess = std::nullopt) const;

  /// Reaction currents at a prescribed voltage (no constraint solve).
  AlgebraicOutputs at_voltage(const CellState& state, double V) const;

  StateRate rate(const CellState& state, const AlgebraicOutputs& alg) const;

  /// Jacobian of the reduced ODE right-hand side with respect to
  /// [m_1..m_q, m_Sp, eps], with V eliminated through the current constraint.
  StateMatrix jacobian(const CellState& state, const AlgebraicOutputs& alg) const;

 private:
  struct Prepared {
    SpeciesVector log_ratio;  // ln P_j = sum_i s_ij ln(m_i / m0_i)
    SpeciesVector E;
    ReactionFlags blocked;
    ReactionFlags off;
    double a_v;
  };
  Prepared prepare(const CellState& state) const;
  SpeciesVector clamped_log_mass(const SpeciesVector& m) const;

  const ReactionModel* model_;
  const ParameterSet* params_;
  double half_f_over_rt_;            // F / (2RT)
  SpeciesVector rt_over_nf_;       // RT / (n_j F)
  SpeciesVector log_molar_scale_;  // ln(n_S M_S v)
  SpeciesVector log_m0_;
  SpeciesVector mass_floor_;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxSpecies, kMaxSpecies> s_t_;  // transpose of s
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxSpecies, kMaxSpecies> mass_per_current_;  // q x p: n_S M_S s_ij / (n_j F)
};

AlgebraicOutputs solve_constraints(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                                   double current, double constraint_tol = 1e-9);

StateRate state_derivative(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                           const AlgebraicOutputs& alg);

/// dE_j/dt along the trajectory, from differentiating the Nernst relation:
/// -(RT / n_j F) sum_i s_ij dm_i / m_i. Throws SolveError(Degenerate) when a
/// species taking part in a reaction is below `mass_threshold` grams.
Eigen::VectorXd potential_rate(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                               const AlgebraicOutputs& alg, const StateRate& rate, double mass_threshold = 1e-12);

enum class Termination { VoltageCutoff, PorosityFloor, SpeciesDepleted, Horizon, SolverFailure };

std::string to_string(Termination t);

struct TraceSample {
  CellState state;
  AlgebraicOutputs alg;
};

struct SimulationTrace {
  std::vector<TraceSample> samples;
  Termination termination = Termination::SolverFailure;
  std::string message;       // diagnostic for SolverFailure
  double current = 0;        // A
  double sulfur_mass = 0;    // initial S8 mass, g
  double discharged_capacity = 0;  // Ah
  double specific_capacity = 0;    // mAh per g of initial S8

  std::size_t size() const { return samples.size(); }
  double end_time() const { return samples.empty() ? 0.0 : samples.back().state.t; }
  /// Specific capacity delivered up to sample k, mAh/g.
  double capacity_at(std::size_t k) const;
  Eigen::VectorXd times() const;
  Eigen::VectorXd voltages() const;
  Eigen::VectorXd capacities() const;
};

SimulationTrace simulate(const ReactionModel& model, const ParameterSet& params, const SimulationConfig& config);

}  // namespace lis
