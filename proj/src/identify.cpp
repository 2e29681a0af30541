#include "lis/identify.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lis/csv.hpp"
#include "lis/features.hpp"
#include "lis/param_file.hpp"
#include "lis/similitude.hpp"
#include "lis/trace_io.hpp"

namespace lis {

void validate(const ExperimentalTrace& d) {
  if (d.t.size() != d.V.size()) throw ValidationError("time and voltage columns differ in length");
  if (d.size() < 10) throw ValidationError("at least 10 samples are required, got " + std::to_string(d.size()));
  for (Eigen::Index k = 0; k < d.t.size(); ++k) {
    if (!std::isfinite(d.t(k)) || (k > 0 && !(d.t(k) > d.t(k - 1))))
      throw ValidationError("time must be strictly increasing (sample " + std::to_string(k + 1) + ")");
    if (!(d.V(k) > 0 && d.V(k) < 5))
      throw ValidationError("voltage must lie in (0, 5) V (sample " + std::to_string(k + 1) + ")");
  }
  if (!(d.effective_current() > 0)) throw ValidationError("bias-corrected current must be positive");
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

ExperimentalTrace load_experiment(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open data file " + path.string());
  ExperimentalTrace d;
  d.meta["source"] = path.filename().string();
  std::vector<double> t, v, current;
  std::optional<std::size_t> col_t, col_v, col_i;
  std::size_t n_cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    if (trimmed.front() == '#') {
      // "# key: value" comment lines carry provenance labels.
      const auto colon = trimmed.find(':');
      if (colon != std::string::npos) d.meta[trim(trimmed.substr(1, colon - 1))] = trim(trimmed.substr(colon + 1));
      continue;
    }
    auto fields = csv_split(trimmed);
    if (!col_t) {
      n_cols = fields.size();
      for (std::size_t c = 0; c < fields.size(); ++c) {
        const std::string name = trim(fields[c]);
        if (name == "t_s") col_t = c;
        if (name == "V") col_v = c;
        if (name == "I_A") col_i = c;
      }
      if (!col_t || !col_v) throw ParseError("header must name columns t_s and V", line_no);
      continue;
    }
    if (fields.size() != n_cols) throw ParseError("expected " + std::to_string(n_cols) + " fields", line_no);
    double tk = 0, vk = 0, ik = 0;
    if (!parse_double(fields[*col_t], tk)) throw ParseError("non-numeric time '" + fields[*col_t] + "'", line_no);
    if (!parse_double(fields[*col_v], vk)) throw ParseError("non-numeric voltage '" + fields[*col_v] + "'", line_no);
    if (col_i && !parse_double(fields[*col_i], ik))
      throw ParseError("non-numeric current '" + fields[*col_i] + "'", line_no);
    if (!t.empty() && !(tk > t.back())) throw ValidationError("time must be strictly increasing", line_no);
    if (!(vk > 0 && vk < 5)) throw ValidationError("voltage must lie in (0, 5) V", line_no);
    t.push_back(tk);
    v.push_back(vk);
    if (col_i) current.push_back(ik);
  }
  if (!col_t) throw ParseError("missing header", line_no);

  d.t = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
  d.V = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  if (options.current) {
    d.current = *options.current;
  } else if (!current.empty()) {
    const auto [lo, hi] = std::minmax_element(current.begin(), current.end());
    if (*hi - *lo > 1e-9 * std::abs(*hi)) throw ValidationError("I_A column must be constant (constant-current discharge)");
    d.current = current.front();
  } else {
    throw ValidationError("no current given: pass it as an option or add an I_A column");
  }
  d.current_bias = options.current_bias;

  std::size_t rises = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[k - 1]) ++rises;
  d.rising_voltage_warning = v.size() > 1 && static_cast<double>(rises) > 0.05 * static_cast<double>(v.size() - 1);
  validate(d);
  return d;
}

void write_experiment_csv(const std::filesystem::path& path, const ExperimentalTrace& data) {
  std::ostringstream os;
  for (const auto& [k, v] : data.meta) os << "# " << k << ": " << v << '\n';
  CsvWriter w(os);
  w.row(std::vector<std::string>{"t_s", "V", "I_A"});
  for (Eigen::Index k = 0; k < data.t.size(); ++k) w.row(std::vector<double>{data.t(k), data.V(k), data.current});
  write_file_atomic(path, os.str());
}

ExperimentalTrace synthesize_experiment(const SyntheticSpec& spec) {
  if (!(spec.sample_interval > 0)) throw ConfigError("sample interval must be positive");
  const ReactionModel model = build_model(spec.model);
  SimulationConfig config = spec.sim;
  config.current = spec.mu * spec.current;
  const SimulationTrace trace = simulate(model, spec.params, config);
  if (trace.termination == Termination::SolverFailure) throw SolveError(SolveError::Kind::NonFinite, trace.message);

  const double t_end = trace.end_time();
  std::vector<double> t;
  for (double tk = 0; tk < t_end; tk += spec.sample_interval) t.push_back(tk);
  if (t_end - t.back() > 1e-9 * t_end) t.push_back(t_end);

  ExperimentalTrace d;
  d.t = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
  d.V = interpolate(trace.times(), trace.voltages(), d.t);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sd);
  if (spec.noise_sd > 0)
    for (Eigen::Index k = 0; k < d.V.size(); ++k) d.V(k) += noise(rng);
  d.current = spec.current;
  d.meta["generator"] = "synthetic, model " + std::to_string(model_number(spec.model));
  d.meta["noise_sd_V"] = format_double(spec.noise_sd);
  d.meta["seed"] = std::to_string(spec.seed);
  d.meta["mu"] = format_double(spec.mu);
  validate(d);
  return d;
}

std::vector<ThetaEntry> default_theta(ModelId id, const ParameterSet& nominal) {
  std::vector<ThetaEntry> theta;
  const auto p = build_model(id).reaction_count();
  for (std::size_t j = 0; j < p; ++j) {
    const double e = nominal.E0(static_cast<Eigen::Index>(j));
    theta.push_back({"E0[" + std::to_string(j + 1) + "]", e - 0.2, e + 0.2});
  }
  theta.push_back({"gamma", 0.1, 3.0});
  theta.push_back({"omega", 0.01, 2.0});
  theta.push_back({"m0[S8]", 0.5, 6.0});
  return theta;
}

std::vector<ThetaEntry> parse_bounds(std::string_view text) {
  std::vector<ThetaEntry> out;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto comma = line.find(',', eq == std::string::npos ? 0 : eq);
    if (eq == std::string::npos || comma == std::string::npos) throw ParseError("expected 'path = lower, upper'", line_no);
    ThetaEntry e;
    e.path = trim(line.substr(0, eq));
    if (!parse_double(trim(line.substr(eq + 1, comma - eq - 1)), e.lower) ||
        !parse_double(trim(line.substr(comma + 1)), e.upper))
      throw ParseError("bounds for '" + e.path + "' are not numbers", line_no);
    if (!(e.lower < e.upper)) throw ParseError("lower bound of '" + e.path + "' is not below the upper", line_no);
    out.push_back(std::move(e));
  }
  if (out.empty()) throw ParseError("no bounds given", line_no);
  return out;
}

std::vector<ThetaEntry> read_bounds(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open bounds file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_bounds(ss.str());
}

double default_alpha(const ExperimentalTrace& data) {
  const double T = data.duration();
  return static_cast<double>(data.size()) * 1e-4 / (T * T);
}

void validate(const FitProblem& problem) {
  validate(problem.data);
  validate(problem.sim);
  validate(problem.pso);
  ScaleFactor{problem.mu};
  if (problem.theta.empty()) throw ConfigError("nothing to fit");
  const ReactionModel model = build_model(problem.model);
  validate(model, problem.fixed);
  std::vector<std::string> seen;
  for (const auto& e : problem.theta) {
    get_parameter(model, problem.fixed, e.path);
    if (std::find(seen.begin(), seen.end(), e.path) != seen.end()) throw ConfigError("duplicate fit parameter " + e.path);
    seen.push_back(e.path);
    if (!std::isfinite(e.lower) || !std::isfinite(e.upper) || !(e.lower < e.upper))
      throw ConfigError("bounds of " + e.path + " must be finite with lower < upper");
  }
  if (problem.alpha && !(*problem.alpha >= 0)) throw ConfigError("alpha must be non-negative");
}

ParameterSet assemble(const FitProblem& problem, const Eigen::VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(problem.theta.size()))
    throw InvalidTheta("theta has " + std::to_string(theta.size()) + " entries, expected " +
                       std::to_string(problem.theta.size()));
  if (!theta.allFinite()) throw InvalidTheta("theta is not finite");
  const ReactionModel model = build_model(problem.model);
  ParameterSet params = problem.fixed;
  for (std::size_t k = 0; k < problem.theta.size(); ++k)
    set_parameter(model, params, problem.theta[k].path, theta(static_cast<Eigen::Index>(k)));
  return params;
}

SimulationConfig evaluation_config(const FitProblem& problem) {
  SimulationConfig c = problem.sim;
  c.current = problem.mu * problem.data.effective_current();
  c.t_max = 2 * problem.data.duration();
  return c;
}

double penalty(const FitProblem& problem) {
  const double alpha = problem.alpha.value_or(default_alpha(problem.data));
  const double T = problem.data.duration();
  return static_cast<double>(problem.data.size()) * 25.0 + alpha * T * T;
}

Evaluation evaluate(const FitProblem& problem, const Eigen::VectorXd& theta) {
  Evaluation ev;
  ev.alpha = problem.alpha.value_or(default_alpha(problem.data));
  const ParameterSet params = assemble(problem, theta);
  const ReactionModel model = build_model(problem.model);

  bool in_bounds = true;
  for (std::size_t k = 0; k < problem.theta.size(); ++k) {
    const double x = theta(static_cast<Eigen::Index>(k));
    in_bounds = in_bounds && x >= problem.theta[k].lower && x <= problem.theta[k].upper;
  }
  bool ok = in_bounds;
  if (ok) {
    try {
      validate(model, params);
      ev.trace = simulate(model, params, evaluation_config(problem));
      ok = ev.trace.termination != Termination::SolverFailure && ev.trace.size() >= 2;
    } catch (const ConfigError&) {
      ok = false;
    }
  }
  const auto& d = problem.data;
  if (!ok) {
    ev.failed = true;
    ev.n_min = d.size();
    ev.duration_err = d.duration();
    ev.J = penalty(problem);
    return ev;
  }

  const double t_hat = ev.trace.end_time();
  const auto n_min = std::upper_bound(d.t.data(), d.t.data() + d.t.size(), t_hat) - d.t.data();
  ev.n_min = static_cast<std::size_t>(n_min);
  ev.residuals = interpolate(ev.trace.times(), ev.trace.voltages(), d.t.head(n_min)) - d.V.head(n_min);
  ev.duration_err = std::abs(t_hat - d.duration());
  ev.J = ev.residuals.squaredNorm() + ev.alpha * ev.duration_err * ev.duration_err;
  return ev;
}

double objective(const FitProblem& problem, const Eigen::VectorXd& theta) { return evaluate(problem, theta).J; }

FitResult fit(const FitProblem& problem) {
  validate(problem);
  const Eigen::Index dim = static_cast<Eigen::Index>(problem.theta.size());
  Eigen::VectorXd lower(dim), upper(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    lower(k) = problem.theta[static_cast<std::size_t>(k)].lower;
    upper(k) = problem.theta[static_cast<std::size_t>(k)].upper;
  }
  std::atomic<std::size_t> failures{0};
  const PsoResult pso = pso_minimize(
      [&](const Eigen::VectorXd& x) {
        Evaluation ev = evaluate(problem, x);
        if (ev.failed) ++failures;
        return ev.J;
      },
      lower, upper, problem.pso);
  if (failures == pso.evaluations) throw AllFailed("every objective evaluation failed; check bounds and config");

  FitResult r;
  for (const auto& e : problem.theta) r.paths.push_back(e.path);
  r.theta_hat = pso.best_x;
  r.params = assemble(problem, r.theta_hat);
  Evaluation best = evaluate(problem, r.theta_hat);
  r.J = best.J;
  r.alpha = best.alpha;
  r.n_min = best.n_min;
  r.residuals = std::move(best.residuals);
  r.rmse = r.n_min ? std::sqrt(r.residuals.squaredNorm() / static_cast<double>(r.n_min)) : 0.0;
  r.duration_err = best.duration_err;
  r.trace = std::move(best.trace);
  r.history = pso.history;
  r.evaluations = pso.evaluations;
  r.failed_evaluations = failures;
  return r;
}

std::vector<std::filesystem::path> write_fit_report(const std::filesystem::path& dir, const FitProblem& problem,
                                                    const FitResult& r) {
  const ReactionModel model = build_model(problem.model);
  const ParameterSet proto = scale_parameters(r.params, ScaleFactor(problem.mu), ScaleDirection::ModelToProto);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file_atomic(dir / name, text);
    written.push_back(dir / name);
  };

  std::ostringstream theta;
  CsvWriter tw(theta);
  tw.row(std::vector<std::string>{"parameter", "model_value", "prototype_value", "lower", "upper", "unit"});
  for (std::size_t k = 0; k < r.paths.size(); ++k) {
    const auto& p = r.paths[k];
    tw.row(std::vector<std::string>{p, format_double(r.theta_hat(static_cast<Eigen::Index>(k))),
                                    format_double(get_parameter(model, proto, p)),
                                    format_double(problem.theta[k].lower), format_double(problem.theta[k].upper),
                                    std::string(parameter_unit(p))});
  }
  put("theta.csv", theta.str());

  std::ostringstream summary;
  CsvWriter sw(summary);
  sw.row(std::vector<std::string>{"key", "value"});
  auto kv = [&](const std::string& k, const std::string& v) { sw.row(std::vector<std::string>{k, v}); };
  kv("model", std::to_string(model_number(problem.model)));
  kv("J_V2", format_double(r.J));
  kv("rmse_V", format_double(r.rmse));
  kv("duration_err_s", format_double(r.duration_err));
  kv("alpha_V2_per_s2", format_double(r.alpha));
  kv("n_min", std::to_string(r.n_min));
  kv("n_samples", std::to_string(problem.data.size()));
  kv("T_s", format_double(problem.data.duration()));
  kv("T_hat_s", format_double(r.trace.end_time()));
  kv("termination", to_string(r.trace.termination));
  kv("mu", format_double(problem.mu));
  kv("prototype_current_A", format_double(problem.data.effective_current()));
  kv("model_current_A", format_double(evaluation_config(problem).current));
  kv("iterations", std::to_string(r.history.size()));
  kv("evaluations", std::to_string(r.evaluations));
  kv("failed_evaluations", std::to_string(r.failed_evaluations));
  kv("seed", std::to_string(problem.pso.seed));
  put("summary.csv", summary.str());

  std::ostringstream history;
  CsvWriter hw(history);
  hw.row(std::vector<std::string>{"iteration", "best_J_V2"});
  for (std::size_t k = 0; k < r.history.size(); ++k)
    hw.row(std::vector<std::string>{std::to_string(k + 1), format_double(r.history[k])});
  put("history.csv", history.str());

  write_trace_csv(dir / "best_trace.csv", model, r.trace);
  written.push_back(dir / "best_trace.csv");
  put("fitted.params", format_parameters(model, r.params));
  put("fitted_prototype.params", format_parameters(model, proto));
  return written;
}

}  // namespace lis
