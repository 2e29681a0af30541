#pragma once

// Similitude between the model-scale cell and a prototype (coin cell) whose
// charge is smaller by a factor mu. Masses, volume and current carry mu,
// areas mu^(2/3), exchange current densities mu^(1/3), and the per-gram
// rates omega and k_p 1/mu. Potentials, gamma, time and temperature are
// unchanged, so both cells share the same voltage curve V(t).

#include <string>

#include "lis/dae.hpp"

namespace lis {

struct ScaleFactor {
  double mu = 1.0;
  explicit ScaleFactor(double m);  // throws ConfigError unless mu > 0 and finite
};

enum class ScaleDirection { ProtoToModel, ModelToProto };

ParameterSet scale_parameters(const ParameterSet& params, ScaleFactor mu, ScaleDirection direction);
double scale_current(double current, ScaleFactor mu, ScaleDirection direction);
double scale_mass(double mass, ScaleFactor mu, ScaleDirection direction);

/// Prototype-scale counterpart of a model-scale simulation config: current
/// and constraint tolerance divided by mu, everything else unchanged.
SimulationConfig prototype_config(const SimulationConfig& model_config, ScaleFactor mu);

struct SimilitudeReport {
  SimulationTrace model_trace;
  SimulationTrace proto_trace;
  // Sup-norm of V_mod(t) - V_pro(t) over the common time range. The scaled
  // runs take the same steps, but V becomes ill-conditioned in the terminal
  // collapse (microseconds long, masses at the concentration floor), so the
  // curves are compared allowing a time shift of rtol * t_end; on the
  // plateaus that shift is worth well under a microvolt. The raw value
  // allows no shift.
  double voltage_sup_diff = 0;      // V
  double voltage_sup_diff_raw = 0;  // V
  double voltage_tolerance = 0;     // 5 * rtol * max V
  double mass_ratio_max_error = 0;  // max |m_mod - mu m_pro| / model inventory
  double mass_tolerance = 0;
  bool passed() const { return voltage_sup_diff <= voltage_tolerance && mass_ratio_max_error <= mass_tolerance; }
};

/// Simulates `params` at model scale and its prototype image, comparing V(t)
/// and m(t) on the model-scale time grid.
SimilitudeReport verify_similitude(ModelId model, const ParameterSet& params, const SimulationConfig& config,
                                   ScaleFactor mu);

}  // namespace lis
