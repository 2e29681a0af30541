#include "lis/dae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lis/errors.hpp"
#include "lis/root.hpp"

namespace lis {

namespace {
using SpeciesArray = Eigen::Array<double, Eigen::Dynamic, 1, 0, kMaxSpecies, 1>;
using SpeciesMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxSpecies, kMaxSpecies>;
}  // namespace

void validate(const SimulationConfig& c) {
  if (!(c.current > 0) || !std::isfinite(c.current)) throw ConfigError("discharge current must be positive");
  if (!(c.t_max > 0)) throw ConfigError("t_max must be positive");
  if (!(c.eps_min > 0 && c.eps_min < 1)) throw ConfigError("eps_min must lie in (0, 1)");
  if (!(c.rtol > 0) || !(c.atol > 0)) throw ConfigError("integrator tolerances must be positive");
  if (!(c.constraint_tol > 0)) throw ConfigError("constraint_tol must be positive");
  if (!(c.dt_init > 0) || !(c.dt_max >= c.dt_init) || !(c.dt_min > 0) || !(c.dt_min <= c.dt_init))
    throw ConfigError("step bounds must satisfy 0 < dt_min <= dt_init <= dt_max");
  for (std::size_t k = 0; k < c.output_times.size(); ++k)
    if (!std::isfinite(c.output_times[k]) || (k > 0 && !(c.output_times[k] > c.output_times[k - 1])))
      throw ConfigError("output_times must be finite and strictly ascending");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::VoltageCutoff: return "VoltageCutoff";
    case Termination::PorosityFloor: return "PorosityFloor";
    case Termination::SpeciesDepleted: return "SpeciesDepleted";
    case Termination::Horizon: return "Horizon";
    case Termination::SolverFailure: return "SolverFailure";
  }
  return "Unknown";
}

Kinetics::Kinetics(const ReactionModel& model, const ParameterSet& params) : model_(&model), params_(&params) {
  const auto& k = params.constants;
  const double rt = k.gas * k.temperature;
  half_f_over_rt_ = k.faraday / (2.0 * rt);
  rt_over_nf_ = rt / (model.n_electrons().array() * k.faraday);
  const Eigen::ArrayXd molar_scale = model.n_sulfur().array() * k.sulfur_molar_mass * params.volume;
  log_molar_scale_ = molar_scale.log();
  log_m0_ = params.m0.array().log();
  mass_floor_ = kConcentrationFloor * molar_scale;
  s_t_ = model.s().transpose();
  mass_per_current_ = (model.n_sulfur() * k.sulfur_molar_mass).asDiagonal() * model.s() *
                      (1.0 / (model.n_electrons().array() * k.faraday)).matrix().asDiagonal();
}

SpeciesVector Kinetics::clamped_log_mass(const SpeciesVector& m) const {
  return m.cwiseMax(mass_floor_).array().log();
}

SpeciesVector Kinetics::reduction_potentials(const SpeciesVector& m) const {
  const SpeciesVector log_c = clamped_log_mass(m) - log_molar_scale_;
  return params_->E0 - (rt_over_nf_.array() * (s_t_ * log_c).array()).matrix();
}

ReactionFlags Kinetics::blocked_reactions(const SpeciesVector& m) const {
  const Eigen::Index p = model_->s().cols();
  ReactionFlags out = ReactionFlags::Constant(p, false);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (model_->s()(i, j) < 0 && m(i) <= mass_floor_(i)) out(j) = true;
  return out;
}

Kinetics::Prepared Kinetics::prepare(const CellState& state) const {
  if (!(state.eps > 0) || !std::isfinite(state.eps))
    throw SolveError(SolveError::Kind::NonFinite, "relative porosity must be positive");
  const SpeciesVector log_m = clamped_log_mass(state.m);
  Prepared p;
  p.log_ratio.noalias() = s_t_ * (log_m - log_m0_);
  SpeciesVector log_c_term;
  log_c_term.noalias() = s_t_ * (log_m - log_molar_scale_);
  p.E = params_->E0 - (rt_over_nf_.array() * log_c_term.array()).matrix();
  p.blocked = blocked_reactions(state.m);
  p.off = state.off.size() ? state.off : ReactionFlags::Constant(p.E.size(), false);
  p.a_v = params_->a_v0 * std::pow(state.eps, params_->gamma);
  return p;
}

AlgebraicOutputs Kinetics::at_voltage(const CellState& state, double V) const {
  const Prepared p = prepare(state);
  AlgebraicOutputs out;
  out.V = V;
  out.E = p.E;
  out.eta = (V - p.E.array()).matrix();
  const SpeciesArray g = p.log_ratio.array() + half_f_over_rt_ * out.eta.array();
  out.i_r = (-p.a_v * params_->i0.array() * (g.exp() - (-g).exp())).matrix();
  out.i_r = p.blocked.select(out.i_r.cwiseMin(0.0), out.i_r);
  out.i_r = p.off.select(0.0, out.i_r);
  out.a_v = p.a_v;
  return out;
}

AlgebraicOutputs Kinetics::solve(const CellState& state, double current, double constraint_tol,
                                 std::optional<double> guess) const {
  const Prepared p = prepare(state);
  const double f = half_f_over_rt_;
  // g_j(V) = f V - b_j; sum_j -2 a_v i0_j sinh(g_j) is strictly decreasing in V.
  const SpeciesArray b = f * p.E.array() - p.log_ratio.array();
  const SpeciesArray weight = 2.0 * p.a_v * params_->i0.array();
  auto residual = [&](double V) {
    double value = -current, slope = 0;
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      if (p.off(j)) continue;
      const double e = std::exp(f * V - b(j));
      const double i_j = -0.5 * weight(j) * (e - 1.0 / e);
      if (p.blocked(j) && i_j > 0) continue;
      value += i_j;
      slope -= 0.5 * f * weight(j) * (e + 1.0 / e);
    }
    return std::pair{value, slope};
  };
  constexpr double lo = 0.0, hi = 5.0;
  const auto [r_lo, d_lo] = residual(lo);
  const auto [r_hi, d_hi] = residual(hi);
  if (!std::isfinite(r_lo) || !std::isfinite(r_hi) || !std::isfinite(d_lo) || !std::isfinite(d_hi))
    throw SolveError(SolveError::Kind::NonFinite, "non-finite Butler-Volmer current on [0, 5] V");
  if (!(r_lo > 0 && r_hi < 0)) throw SolveError(SolveError::Kind::NoBracket, "cell voltage not bracketed by [0, 5] V");

  const double start = guess.value_or(p.E.maxCoeff());
  const auto root = newton_bisect<double>(residual, lo, hi, start, 1e-15, 1e-3 * constraint_tol);
  if (!root) throw SolveError(SolveError::Kind::NonFinite, "voltage solve failed");
  // On very steep branches a few ulps of V already exceed the tolerance; accept that resolution.
  const double ulp_floor = 4 * std::abs(residual(root->x).second) * std::numeric_limits<double>::epsilon() * root->x;
  if (!(std::abs(root->fx) <= std::max(constraint_tol, ulp_floor)))
    throw SolveError(SolveError::Kind::NonFinite, "current constraint residual above tolerance");

  AlgebraicOutputs out;
  out.V = root->x;
  out.E = p.E;
  out.eta = (out.V - p.E.array()).matrix();
  const SpeciesArray g = f * out.V - b;
  out.i_r = (-weight * g.sinh()).matrix();
  out.i_r = p.blocked.select(out.i_r.cwiseMin(0.0), out.i_r);
  out.i_r = p.off.select(0.0, out.i_r);
  out.a_v = p.a_v;
  return out;
}

StateRate Kinetics::rate(const CellState& state, const AlgebraicOutputs& alg) const {
  StateRate r;
  r.dm = mass_per_current_ * alg.i_r;
  const auto last = r.dm.size() - 1;
  r.dm_Sp = params_->k_p * state.m_Sp * (state.m(last) - params_->S_sat);
  r.dm(last) -= r.dm_Sp;
  r.deps = -params_->omega * r.dm_Sp;
  return r;
}

StateMatrix Kinetics::jacobian(const CellState& state, const AlgebraicOutputs& alg) const {
  const Eigen::Index q = state.m.size();
  const Eigen::Index p = alg.i_r.size();
  const Eigen::Index n = q + 2;
  const double f = half_f_over_rt_;

  // dg_j/dm_k = s_kj (1 + f RT / (n_j F)) / m_k, zero for clamped species.
  SpeciesMatrix dg_dm = s_t_;
  for (Eigen::Index j = 0; j < p; ++j) dg_dm.row(j) *= 1.0 + f * rt_over_nf_(j);
  for (Eigen::Index k = 0; k < q; ++k)
    dg_dm.col(k) *= state.m(k) > mass_floor_(k) ? 1.0 / state.m(k) : 0.0;

  const Prepared prep = prepare(state);
  const SpeciesArray g = f * alg.eta.array() + prep.log_ratio.array();
  const SpeciesArray raw = -alg.a_v * params_->i0.array() * (g.exp() - (-g).exp());
  const SpeciesVector di_dg =
      (prep.off || (prep.blocked && raw > 0)).select(0.0, -alg.a_v * params_->i0.array() * (g.exp() + (-g).exp())).matrix();
  const double dsum_dV = f * di_dg.sum();
  const SpeciesVector di_deps_direct = alg.i_r * (params_->gamma / state.eps);

  // Total derivative of i with respect to [m, m_Sp, eps] with V eliminated.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxSpecies, kMaxSpecies + 2> di_dy =
      decltype(di_dy)::Zero(p, n);
  di_dy.leftCols(q) = di_dg.asDiagonal() * dg_dm;
  di_dy.col(q + 1) = di_deps_direct;
  const Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor, 1, kMaxSpecies + 2> dV_dy = -di_dy.colwise().sum() / dsum_dV;
  di_dy += (f * di_dg) * dV_dy;

  StateMatrix J = StateMatrix::Zero(n, n);
  J.topRows(q) = mass_per_current_ * di_dy;
  const double dprec_dmq = params_->k_p * state.m_Sp;
  const double dprec_dmsp = params_->k_p * (state.m(q - 1) - params_->S_sat);
  J(q - 1, q - 1) -= dprec_dmq;
  J(q - 1, q) -= dprec_dmsp;
  J(q, q - 1) = dprec_dmq;
  J(q, q) = dprec_dmsp;
  J(q + 1, q - 1) = -params_->omega * dprec_dmq;
  J(q + 1, q) = -params_->omega * dprec_dmsp;
  return J;
}

AlgebraicOutputs solve_constraints(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                                   double current, double constraint_tol) {
  if ((state.m.array() <= 0).any()) throw SolveError(SolveError::Kind::Degenerate, "species masses must be positive");
  return Kinetics(model, params).solve(state, current, constraint_tol);
}

StateRate state_derivative(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                           const AlgebraicOutputs& alg) {
  return Kinetics(model, params).rate(state, alg);
}

Eigen::VectorXd potential_rate(const ReactionModel& model, const ParameterSet& params, const CellState& state,
                               const AlgebraicOutputs& alg, const StateRate& rate, double mass_threshold) {
  (void)alg;
  const auto& k = params.constants;
  const Eigen::Index p = static_cast<Eigen::Index>(model.reaction_count());
  Eigen::VectorXd out(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0;
    for (Eigen::Index i = 0; i < state.m.size(); ++i) {
      const double s = model.s()(i, j);
      if (s == 0) continue;
      if (!(state.m(i) >= mass_threshold))
        throw SolveError(SolveError::Kind::Degenerate, "species " + model.species()[static_cast<std::size_t>(i)].name +
                                                           " depleted in reaction " + std::to_string(j + 1));
      sum += s * rate.dm(i) / state.m(i);
    }
    out(j) = -k.gas * k.temperature / (model.n_electrons()(j) * k.faraday) * sum;
  }
  return out;
}

double SimulationTrace::capacity_at(std::size_t k) const {
  return current * (samples[k].state.t - samples.front().state.t) / 3.6 / sulfur_mass;
}

Eigen::VectorXd SimulationTrace::times() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) out(static_cast<Eigen::Index>(k)) = samples[k].state.t;
  return out;
}

Eigen::VectorXd SimulationTrace::voltages() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) out(static_cast<Eigen::Index>(k)) = samples[k].alg.V;
  return out;
}

Eigen::VectorXd SimulationTrace::capacities() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t k = 0; k < samples.size(); ++k) out(static_cast<Eigen::Index>(k)) = capacity_at(k);
  return out;
}

namespace {

StateVector pack(const CellState& s) {
  const Eigen::Index q = s.m.size();
  StateVector y(q + 2);
  y.head(q) = s.m;
  y(q) = s.m_Sp;
  y(q + 1) = s.eps;
  return y;
}

CellState unpack(const StateVector& y, double t) {
  const Eigen::Index q = y.size() - 2;
  CellState s;
  s.m = y.head(q);
  s.m_Sp = y(q);
  s.eps = y(q + 1);
  s.t = t;
  return s;
}

StateVector pack(const StateRate& r) {
  const Eigen::Index q = r.dm.size();
  StateVector y(q + 2);
  y.head(q) = r.dm;
  y(q) = r.dm_Sp;
  y(q + 1) = r.deps;
  return y;
}

// Linearly implicit two-stage Rosenbrock scheme (ROS2, gamma = 1 + 1/sqrt 2).
// Second order for any Jacobian approximation, L-stable.
class Ros2 {
 public:
  Ros2(const Kinetics& kin, const SimulationConfig& cfg) : kin_(kin), cfg_(cfg) {}

  struct Point {
    StateVector y;
    AlgebraicOutputs alg;
    StateVector f;
  };

  Point evaluate(const StateVector& y, double t, std::optional<double> guess) const {
    const CellState s = state(y, t);
    Point pt{y, kin_.solve(s, cfg_.current, cfg_.constraint_tol, guess), {}};
    pt.f = pack(kin_.rate(s, pt.alg));
    return pt;
  }

  StateMatrix jacobian(const Point& pt, double t) const { return kin_.jacobian(state(pt.y, t), pt.alg); }

  CellState state(const StateVector& y, double t) const {
    CellState s = unpack(y, t);
    s.off = off;
    return s;
  }

  // Reactions switched off; changes only between steps.
  ReactionFlags off;

  // One step of size h from `start` using Jacobian J.
  StateVector step(const Point& start, const StateMatrix& J, double t, double h) const {
    constexpr double g = 1.0 + 0.70710678118654752440;
    const Eigen::Index n = start.y.size();
    const Eigen::PartialPivLU<StateMatrix> lu(StateMatrix::Identity(n, n) - (g * h) * J);
    const StateVector k1 = lu.solve(start.f);
    const Point mid = evaluate(start.y + h * k1, t + h, start.alg.V);
    const StateVector k2 = lu.solve(mid.f - 2.0 * k1);
    return start.y + (1.5 * h) * k1 + (0.5 * h) * k2;
  }

 private:
  const Kinetics& kin_;
  const SimulationConfig& cfg_;
};

// Every reaction still carrying reduction current is about to lose a reactant.
bool exhausted(const Kinetics& kin, const TraceSample& sample) {
  constexpr double margin = 10.0;
  const auto& s = kin.model().s();
  bool any_carrier = false;
  for (Eigen::Index j = 0; j < sample.alg.i_r.size(); ++j) {
    if (!(sample.alg.i_r(j) > 0)) continue;
    any_carrier = true;
    bool starved = false;
    for (Eigen::Index i = 0; i < sample.state.m.size(); ++i)
      if (s(i, j) < 0 && sample.state.m(i) < margin * kin.mass_floor(i)) starved = true;
    if (!starved) return false;
  }
  return any_carrier;
}

// A reaction whose reactant has reached the concentration floor is switched
// off in both directions. Under the floor the Nernst potential is frozen, and
// a reaction balanced right at the clamp would otherwise chatter across it
// with vanishing steps. It comes back once every reactant has recovered to
// kReviveMargin floors. Returns true when the set changed.
bool update_switches(const Kinetics& kin, const StateVector& y, ReactionFlags& off) {
  constexpr double kReviveMargin = 10.0;
  const auto& s = kin.model().s();
  bool changed = false;
  for (Eigen::Index j = 0; j < off.size(); ++j) {
    bool depleted = false, recovered = true;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      if (!(s(i, j) < 0)) continue;
      depleted = depleted || y(i) <= kin.mass_floor(i);
      recovered = recovered && y(i) > kReviveMargin * kin.mass_floor(i);
    }
    const bool next = off(j) ? !recovered : depleted;
    changed = changed || next != off(j);
    off(j) = next;
  }
  return changed;
}

bool physical(const StateVector& y) {
  const Eigen::Index q = y.size() - 2;
  return y.allFinite() && (y.head(q).array() > 0).all() && y(q) >= 0 && y(q + 1) > 0;
}

}  // namespace

SimulationTrace simulate(const ReactionModel& model, const ParameterSet& params, const SimulationConfig& config) {
  validate(model, params);
  validate(config);

  SimulationTrace trace;
  trace.current = config.current;
  trace.sulfur_mass = params.m0(0);

  const Kinetics kin(model, params);
  Ros2 ros(kin, config);
  ros.off = ReactionFlags::Constant(params.E0.size(), false);
  const Eigen::Index q = params.m0.size();
  const Eigen::Index n = q + 2;

  // Error weights: masses against the initial inventory, porosity absolute.
  const double inventory = params.m0.sum() + params.m_Sp0;
  StateVector abs_tol = StateVector::Constant(n, config.atol * inventory);
  abs_tol(n - 1) = config.atol;

  const CellState s0 = initial_state(params);
  double t = s0.t;
  Ros2::Point cur;
  try {
    cur = ros.evaluate(pack(s0), t, std::nullopt);
  } catch (const SolveError& e) {
    trace.termination = Termination::SolverFailure;
    trace.message = std::string("initial state: ") + e.what();
    return trace;
  }
  trace.samples.push_back({s0, cur.alg});

  auto finish = [&](Termination why) {
    trace.termination = why;
    trace.discharged_capacity = config.current * (t - s0.t) / 3600.0;
    trace.specific_capacity = trace.discharged_capacity * 1000.0 / trace.sulfur_mass;
  };

  double h = config.dt_init;
  auto stop = std::upper_bound(config.output_times.begin(), config.output_times.end(), t);
  for (std::size_t steps = 0;; ++steps) {
    if (steps >= config.max_steps) {
      trace.message = "step budget exhausted";
      finish(Termination::SolverFailure);
      return trace;
    }
    if (t >= config.t_max) {
      finish(Termination::Horizon);
      return trace;
    }
    if (h < config.dt_min) {
      trace.message = "step size fell below dt_min at t = " + std::to_string(t);
      finish(Termination::SolverFailure);
      return trace;
    }
    h = std::min({h, config.dt_max, config.t_max - t});
    const double h_free = h;
    const bool to_stop = stop != config.output_times.end() && t + h >= *stop;
    // A step landing on the output time by itself is left untouched.
    const bool clipped = to_stop && t + h != *stop;
    if (clipped) h = *stop - t;

    // Step doubling: one step of h against two steps of h/2.
    StateVector y_full, y_two;
    Ros2::Point half;
    try {
      const StateMatrix J = ros.jacobian(cur, t);
      y_full = ros.step(cur, J, t, h);
      const StateVector y_half = ros.step(cur, J, t, 0.5 * h);
      if (!physical(y_half)) throw SolveError(SolveError::Kind::Degenerate, "unphysical half step");
      half = ros.evaluate(y_half, t + 0.5 * h, cur.alg.V);
      y_two = ros.step(half, ros.jacobian(half, t + 0.5 * h), t + 0.5 * h, 0.5 * h);
    } catch (const SolveError&) {
      h *= 0.25;
      continue;
    }
    const StateVector err = (y_two - y_full) / 3.0;
    const StateVector scale = abs_tol.array() + config.rtol * y_two.array().abs().max(cur.y.array().abs());
    const double err_norm = (err.array() / scale.array()).abs().maxCoeff();
    if (!std::isfinite(err_norm) || !physical(y_two)) {
      h *= 0.25;
      continue;
    }
    if (err_norm > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(err_norm, -1.0 / 3.0));
      continue;
    }

    Ros2::Point next;
    try {
      next = ros.evaluate(y_two, t + h, half.alg.V);
    } catch (const SolveError&) {
      h *= 0.25;
      continue;
    }

    // Locate voltage-cutoff and porosity-floor crossings by shortening the step.
    const double eps_next = y_two(n - 1);
    const bool v_cross = next.alg.V < config.v_cutoff;
    const bool eps_cross = eps_next < config.eps_min;
    if ((v_cross || eps_cross) && h > 1e-6) {
      double frac = 1.0;
      bool settled = true;
      if (v_cross) {
        const double over = config.v_cutoff - next.alg.V;
        settled = settled && over <= 1e-5 * config.v_cutoff;
        frac = std::min(frac, (cur.alg.V - config.v_cutoff) / (cur.alg.V - next.alg.V));
      }
      if (eps_cross) {
        const double eps_cur = cur.y(n - 1);
        const double over = config.eps_min - eps_next;
        settled = settled && over <= 1e-5 * config.eps_min;
        frac = std::min(frac, (eps_cur - config.eps_min) / (eps_cur - eps_next));
      }
      if (!settled) {
        h *= std::clamp(frac * 1.001, 1e-3, 0.999);
        continue;
      }
    }

    const double err_for_growth = err_norm;
    t = to_stop ? *stop : t + h;
    if (to_stop) ++stop;
    cur = std::move(next);
    trace.samples.push_back({ros.state(cur.y, t), cur.alg});

    if (v_cross) {
      finish(Termination::VoltageCutoff);
      return trace;
    }
    if (eps_cross) {
      finish(Termination::PorosityFloor);
      return trace;
    }
    if (exhausted(kin, trace.samples.back())) {
      finish(Termination::SpeciesDepleted);
      return trace;
    }
    if (update_switches(kin, cur.y, ros.off)) {
      if (ros.off.all()) {
        finish(Termination::SpeciesDepleted);
        return trace;
      }
      try {
        cur = ros.evaluate(cur.y, t, cur.alg.V);
      } catch (const SolveError& e) {
        trace.message = std::string("after switching reactions: ") + e.what();
        finish(Termination::SolverFailure);
        return trace;
      }
    }
    // A step cut short only to hit an output time does not shrink the next one.
    h = std::max(clipped ? h_free : 0.0,
                 h * std::min(4.0, std::max(0.2, 0.9 * std::pow(std::max(err_for_growth, 1e-10), -1.0 / 3.0))));
  }
}

}  // namespace lis
