#pragma once

// One-at-a-time perturbation sweeps and a parameter influence ranking.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lis/dae.hpp"
#include "lis/features.hpp"

namespace lis {

enum class PerturbationMode { Multiplicative, Additive };

struct SweepSpec {
  std::string name = "sweep";
  ModelId model = ModelId::M4;
  std::string target;  // parameter path, e.g. "E0[1]"
  // Relative offsets (value * (1 + d)) or absolute ones (value + d).
  std::vector<double> offsets{-0.2, -0.1, 0.1, 0.2};
  PerturbationMode mode = PerturbationMode::Multiplicative;
  ParameterSet base;
  SimulationConfig config;
  unsigned threads = 1;
};

/// Offsets of 25 and 50 mV either side, the usual grid for potentials.
std::vector<double> potential_offsets();

struct SweepRun {
  double offset = 0;  // 0 for the nominal run
  double value = 0;   // parameter value used
  SimulationTrace trace;
  CurveFeatures features;
  bool failed = false;  // SolverFailure or an invalid perturbed parameter set
};

/// Feature differences against the nominal run; absent when either side
/// lacks the feature.
struct FeatureDelta {
  double offset = 0;
  std::optional<double> high_plateau_mean;
  std::optional<double> low_plateau_mean;
  std::optional<double> dip_voltage;
  std::optional<double> dip_capacity;
  std::optional<double> specific_capacity;
  std::optional<double> duration;
};

struct SweepResult {
  std::string name;
  ModelId model = ModelId::M4;
  std::string target;
  std::vector<SweepRun> runs;  // nominal first, then one per offset
  std::vector<FeatureDelta> deltas;

  const SweepRun& nominal() const { return runs.front(); }
};

double perturbed_value(double nominal, double offset, PerturbationMode mode);

SweepResult run_sweep(const SweepSpec& spec);

/// Writes <root>/<name>/<target>/<offset>.csv per run and
/// <root>/<name>/summary.csv. Returns the files written.
std::vector<std::filesystem::path> write_sweep(const std::filesystem::path& root, const SweepResult& result);

/// Largest |V_a(Q) - V_b(Q)| over the capacity range both traces cover.
double voltage_sup_distance(const SimulationTrace& a, const SimulationTrace& b);

/// Parameters considered by rank_parameters: E0, i0, gamma, omega, k_p,
/// S_sat and m0[S8].
std::vector<std::string> ranked_parameter_paths(const ReactionModel& model);

/// Influence of each parameter: voltage sup distance between the runs at
/// (1 + perturbation) and (1 - perturbation) times nominal. Sorted by
/// descending score, ties by path.
std::vector<std::pair<std::string, double>> rank_parameters(ModelId model, const ParameterSet& base,
                                                            const SimulationConfig& config, double perturbation,
                                                            unsigned threads = 1);

}  // namespace lis
