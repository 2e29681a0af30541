#include "lis/similitude.hpp"

#include <algorithm>
#include <cmath>

#include "lis/errors.hpp"
#include "lis/features.hpp"

namespace lis {

ScaleFactor::ScaleFactor(double m) : mu(m) {
  if (!(m > 0) || !std::isfinite(m)) throw ConfigError("scale factor mu must be positive and finite");
}

namespace {

// Exponent of mu carried by each field when going from prototype to model.
double factor(ScaleFactor mu, ScaleDirection d, double power) {
  const double f = power == 1.0 ? mu.mu : std::pow(mu.mu, power);
  return d == ScaleDirection::ProtoToModel ? f : 1.0 / f;
}

// Distance from (t, v) to the curve (tb, vb) allowing a time shift of up to
// dt: zero when v lies within the range the curve spans on [t - dt, t + dt].
double shifted_distance(const Eigen::VectorXd& tb, const Eigen::VectorXd& vb, double t, double v, double dt) {
  const Eigen::Vector2d ends = interpolate(tb, vb, Eigen::Vector2d(t - dt, t + dt));
  double lo = ends.minCoeff(), hi = ends.maxCoeff();
  const auto first = std::upper_bound(tb.data(), tb.data() + tb.size(), t - dt) - tb.data();
  for (Eigen::Index k = first; k < tb.size() && tb(k) < t + dt; ++k) {
    lo = std::min(lo, vb(k));
    hi = std::max(hi, vb(k));
  }
  return v < lo ? lo - v : (v > hi ? v - hi : 0.0);
}

}  // namespace

ParameterSet scale_parameters(const ParameterSet& params, ScaleFactor mu, ScaleDirection d) {
  if (mu.mu == 1.0) return params;
  ParameterSet out = params;
  const double mass = factor(mu, d, 1.0);
  out.m0 = params.m0 * mass;
  out.m_Sp0 = params.m_Sp0 * mass;
  out.S_sat = params.S_sat * mass;
  out.volume = params.volume * mass;
  out.a_v0 = params.a_v0 * factor(mu, d, 2.0 / 3.0);
  out.i0 = params.i0 * factor(mu, d, 1.0 / 3.0);
  out.omega = params.omega / mass;
  out.k_p = params.k_p / mass;
  return out;
}

double scale_current(double current, ScaleFactor mu, ScaleDirection d) { return current * factor(mu, d, 1.0); }
double scale_mass(double mass, ScaleFactor mu, ScaleDirection d) { return mass * factor(mu, d, 1.0); }

SimulationConfig prototype_config(const SimulationConfig& model_config, ScaleFactor mu) {
  SimulationConfig c = model_config;
  c.current = scale_current(model_config.current, mu, ScaleDirection::ModelToProto);
  c.constraint_tol = model_config.constraint_tol / mu.mu;
  return c;
}

SimilitudeReport verify_similitude(ModelId id, const ParameterSet& params, const SimulationConfig& config,
                                   ScaleFactor mu) {
  const ReactionModel model = build_model(id);
  SimilitudeReport r;
  r.model_trace = simulate(model, params, config);
  // The prototype also stops on every model sample time, so the curves are
  // compared at common instants rather than through interpolation. At mu = 1
  // both runs are the same computation and need no common grid.
  SimulationConfig proto_config = prototype_config(config, mu);
  if (mu.mu != 1.0) {
    proto_config.output_times.clear();
    for (const auto& sample : r.model_trace.samples)
      if (proto_config.output_times.empty() || sample.state.t > proto_config.output_times.back())
        proto_config.output_times.push_back(sample.state.t);
  }
  r.proto_trace = simulate(model, scale_parameters(params, mu, ScaleDirection::ModelToProto), proto_config);
  const auto& a = r.model_trace;
  const auto& b = r.proto_trace;
  if (a.samples.empty() || b.samples.empty()) {
    r.voltage_sup_diff = r.voltage_sup_diff_raw = r.mass_ratio_max_error = INFINITY;
    return r;
  }
  const Eigen::VectorXd ta = a.times(), tb = b.times();
  // The terminating sample sits wherever the last step landed, with masses
  // at the concentration floor; the curves are compared up to the sample before it.
  const double t_end = std::min(a.end_time(), b.end_time());
  const Eigen::Index n = std::lower_bound(ta.data(), ta.data() + ta.size(), t_end) - ta.data();
  const Eigen::VectorXd at = ta.head(n);

  const Eigen::VectorXd va = a.voltages().head(n);
  const Eigen::VectorXd vb = b.voltages();
  r.voltage_sup_diff_raw = (va - interpolate(tb, vb, at)).cwiseAbs().maxCoeff();
  const double dt = config.rtol * t_end;
  for (Eigen::Index k = 0; k < n; ++k)
    r.voltage_sup_diff = std::max(r.voltage_sup_diff, shifted_distance(tb, vb, at(k), va(k), dt));
  r.voltage_tolerance = 5.0 * config.rtol * a.voltages().cwiseAbs().maxCoeff();

  const double inventory = params.m0.sum() + params.m_Sp0;
  const Eigen::Index q = params.m0.size();
  for (Eigen::Index i = 0; i <= q; ++i) {
    Eigen::VectorXd ma(ta.size()), mb(tb.size());
    for (Eigen::Index k = 0; k < ta.size(); ++k) {
      const auto& s = a.samples[static_cast<std::size_t>(k)].state;
      ma(k) = i < q ? s.m(i) : s.m_Sp;
    }
    for (Eigen::Index k = 0; k < tb.size(); ++k) {
      const auto& s = b.samples[static_cast<std::size_t>(k)].state;
      mb(k) = i < q ? s.m(i) : s.m_Sp;
    }
    const Eigen::VectorXd mb_at = interpolate(tb, mb, at) * mu.mu;
    r.mass_ratio_max_error = std::max(r.mass_ratio_max_error, (ma.head(n) - mb_at).cwiseAbs().maxCoeff() / inventory);
  }
  r.mass_tolerance = 5.0 * config.rtol;
  return r;
}

}  // namespace lis
