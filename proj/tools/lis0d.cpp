// lis0d: simulate, sweep, scale, fit and rank from the command line.
//
// Exit codes: 0 ok, 1 other error, 2 configuration error, 3 solver failure,
// 4 data ingestion error, 5 every fit evaluation failed.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "lis/csv.hpp"
#include "lis/errors.hpp"
#include "lis/identify.hpp"
#include "lis/param_file.hpp"
#include "lis/sensitivity.hpp"
#include "lis/similitude.hpp"
#include "lis/trace_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lis;

namespace {

constexpr double kTheoreticalCapacity = 1672.0;  // mAh per g of sulfur
constexpr const char* kOutEnv = "LIS0D_OUT";

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kSolver = 3, kIngest = 4, kAllFailed = 5 };

// Thrown for failures while reading user data files.
struct IngestError : Error {
  using Error::Error;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Options {
  std::string out;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::string> argv;
};

struct ModelOptions {
  int model = 0;
  std::string params = "nominal";
};

struct CurrentOptions {
  std::optional<double> c_rate;
  std::optional<double> current;
};

struct SimOptions {
  SimulationConfig config;
};

void add_model(CLI::App* cmd, ModelOptions& m, bool required = true) {
  auto* opt = cmd->add_option("--model", m.model, "Reaction model 1-4");
  if (required) opt->required();
  cmd->add_option("--params", m.params, "Parameter file, or 'nominal'")->capture_default_str();
}

void add_current(CLI::App* cmd, CurrentOptions& c) {
  auto* rate = cmd->add_option("--c-rate", c.c_rate, "C-rate against 1672 mAh/g times m0[S8]");
  auto* cur = cmd->add_option("--current", c.current, "Discharge current, A");
  rate->excludes(cur);
  cur->excludes(rate);
}

void add_sim(CLI::App* cmd, SimOptions& s) {
  cmd->add_option("--v-cutoff", s.config.v_cutoff, "Cutoff voltage, V")->capture_default_str();
  cmd->add_option("--t-max", s.config.t_max, "Time horizon, s")->capture_default_str();
  cmd->add_option("--rtol", s.config.rtol, "Relative tolerance")->capture_default_str();
  cmd->add_option("--atol", s.config.atol, "Absolute tolerance (relative to sulfur inventory for masses)")
      ->capture_default_str();
}

ParameterFile resolve_params(const ModelOptions& m) {
  if (m.params == "nominal") {
    const ModelId id = model_from_number(m.model);
    return {id, nominal_parameters(id)};
  }
  ParameterFile f;
  try {
    f = read_parameters(m.params);
  } catch (const ParseError& e) {
    throw ConfigError(m.params + ":" + std::to_string(e.line()) + ": " + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (m.model != 0 && model_from_number(m.model) != f.model)
    throw ConfigError("--model " + std::to_string(m.model) + " disagrees with model in " + m.params);
  validate(build_model(f.model), f.params);
  return f;
}

double resolve_current(const CurrentOptions& c, const ParameterSet& p) {
  if (!c.c_rate && !c.current) throw ConfigError("one of --c-rate or --current is required");
  const double I = c.current ? *c.current : *c.c_rate * kTheoreticalCapacity * p.m0(0) / 1000.0;
  if (!(I > 0)) throw ConfigError("discharge current must be positive");
  return I;
}

json params_json(const ReactionModel& model, const ParameterSet& p) {
  json j = json::object();
  for (const auto& path : parameter_paths(model)) j[path] = get_parameter(model, p, path);
  return j;
}

json sim_json(const SimulationConfig& c) {
  return {{"current_A", c.current}, {"t_max_s", c.t_max},       {"v_cutoff_V", c.v_cutoff},
          {"eps_min", c.eps_min},   {"rtol", c.rtol},            {"atol", c.atol},
          {"dt_init_s", c.dt_init}, {"dt_max_s", c.dt_max},      {"dt_min_s", c.dt_min},
          {"constraint_tol_A", c.constraint_tol}, {"max_steps", c.max_steps}};
}

// Collects what a run did and writes manifest.json under --out at the end.
struct Manifest {
  json doc;
  std::vector<fs::path> outputs;

  Manifest(const std::string& command, const Options& o) {
    doc["tool"] = "lis0d";
    doc["version"] = LIS0D_VERSION;
    doc["command"] = command;
    doc["argv"] = o.argv;
    doc["threads"] = o.threads;
    doc["seed"] = nullptr;
    doc["started"] = utc_now();
  }

  void write(const fs::path& out, int exit_code) {
    doc["finished"] = utc_now();
    doc["exit_code"] = exit_code;
    json files = json::array();
    for (const auto& p : outputs) files.push_back(p.string());
    files.push_back((out / "manifest.json").string());
    doc["outputs"] = files;
    write_file_atomic(out / "manifest.json", doc.dump(2) + "\n");
  }
};

int cmd_simulate(const Options& o, const ModelOptions& m, const CurrentOptions& c, SimOptions s) {
  const ParameterFile pf = resolve_params(m);
  const ReactionModel model = build_model(pf.model);
  s.config.current = resolve_current(c, pf.params);
  validate(s.config);

  Manifest manifest("simulate", o);
  manifest.doc["config"] = {{"model", model_number(pf.model)}, {"params_source", m.params},
                            {"c_rate", c.c_rate ? json(*c.c_rate) : json(nullptr)},
                            {"simulation", sim_json(s.config)}, {"params", params_json(model, pf.params)}};

  const SimulationTrace trace = simulate(model, pf.params, s.config);
  const fs::path out(o.out);
  write_trace_csv(out / "trace.csv", model, trace);
  manifest.outputs.push_back(out / "trace.csv");
  write_parameters(out / "resolved.params", model, pf.params);
  manifest.outputs.push_back(out / "resolved.params");

  const auto f = extract_features(trace, s.config.v_cutoff);
  manifest.doc["result"] = {{"termination", to_string(trace.termination)},
                            {"message", trace.message},
                            {"samples", trace.size()},
                            {"end_time_s", trace.end_time()},
                            {"specific_capacity_mAh_per_g", trace.specific_capacity}};
  std::cout << "termination: " << to_string(trace.termination) << '\n'
            << "specific capacity: " << std::fixed << std::setprecision(1) << trace.specific_capacity
            << " mAh/g\n"
            << "duration: " << std::setprecision(1) << trace.end_time() << " s\n";
  if (f.has_dip())
    std::cout << "dip: " << std::setprecision(4) << *f.dip_voltage << " V at " << std::setprecision(1)
              << *f.dip_capacity << " mAh/g\n";
  if (!trace.message.empty()) std::cout << "note: " << trace.message << '\n';

  const int code = trace.termination == Termination::SolverFailure ? kSolver : kOk;
  manifest.write(out, code);
  return code;
}

struct SweepOptions {
  std::string target;
  std::vector<double> offsets;
  bool additive = false;
  std::string name = "sweep";
};

int cmd_sweep(const Options& o, const ModelOptions& m, const CurrentOptions& c, SimOptions s, const SweepOptions& w) {
  const ParameterFile pf = resolve_params(m);
  const ReactionModel model = build_model(pf.model);
  s.config.current = resolve_current(c, pf.params);

  SweepSpec spec;
  spec.name = w.name;
  spec.model = pf.model;
  spec.target = w.target;
  spec.mode = w.additive ? PerturbationMode::Additive : PerturbationMode::Multiplicative;
  if (!w.offsets.empty())
    spec.offsets = w.offsets;
  else if (w.additive)
    spec.offsets = potential_offsets();
  spec.base = pf.params;
  spec.config = s.config;
  spec.threads = o.threads;
  get_parameter(model, pf.params, spec.target);

  Manifest manifest("sweep", o);
  manifest.doc["config"] = {{"model", model_number(pf.model)}, {"params_source", m.params},
                            {"target", spec.target}, {"offsets", spec.offsets},
                            {"mode", w.additive ? "additive" : "multiplicative"}, {"name", spec.name},
                            {"c_rate", c.c_rate ? json(*c.c_rate) : json(nullptr)},
                            {"simulation", sim_json(s.config)}, {"params", params_json(model, pf.params)}};

  const SweepResult result = run_sweep(spec);
  const fs::path out(o.out);
  manifest.outputs = write_sweep(out, result);

  std::size_t failed = 0;
  for (const auto& run : result.runs) {
    failed += run.failed;
    std::cout << std::setw(10) << (run.offset == 0 ? std::string("nominal") : format_double(run.offset)) << "  "
              << std::setw(15) << to_string(run.trace.termination) << "  " << std::fixed << std::setprecision(1)
              << run.features.specific_capacity << " mAh/g";
    if (run.features.high_plateau_mean)
      std::cout << "  high " << std::setprecision(4) << *run.features.high_plateau_mean << " V";
    if (run.features.low_plateau_mean) std::cout << "  low " << std::setprecision(4) << *run.features.low_plateau_mean << " V";
    std::cout << '\n';
  }
  manifest.doc["result"] = {{"runs", result.runs.size()}, {"failed", failed}};
  const int code = failed ? kSolver : kOk;
  manifest.write(out, code);
  return code;
}

struct ScaleOptions {
  double mu = 0;
  std::string direction = "to-proto";
  std::optional<double> current;
  std::string output = "scaled.params";
};

int cmd_scale(const Options& o, const ModelOptions& m, const ScaleOptions& sc) {
  const ParameterFile pf = resolve_params(m);
  const ReactionModel model = build_model(pf.model);
  const ScaleFactor mu(sc.mu);
  ScaleDirection dir;
  if (sc.direction == "to-proto")
    dir = ScaleDirection::ModelToProto;
  else if (sc.direction == "to-model")
    dir = ScaleDirection::ProtoToModel;
  else
    throw ConfigError("--direction must be to-proto or to-model");

  Manifest manifest("scale", o);
  manifest.doc["config"] = {{"model", model_number(pf.model)}, {"params_source", m.params}, {"mu", sc.mu},
                            {"direction", sc.direction}, {"params", params_json(model, pf.params)}};
  const ParameterSet scaled = scale_parameters(pf.params, mu, dir);
  const fs::path out(o.out);
  write_parameters(out / sc.output, model, scaled);
  manifest.outputs.push_back(out / sc.output);
  std::cout << format_parameters(model, scaled);
  if (sc.current) {
    const double I = scale_current(*sc.current, mu, dir);
    manifest.doc["result"] = {{"current_A", *sc.current}, {"scaled_current_A", I}};
    std::cout << "# current " << format_double(*sc.current) << " A -> " << format_double(I) << " A\n";
  }
  manifest.write(out, kOk);
  return kOk;
}

struct FitOptions {
  std::string data;
  std::optional<double> current;
  double bias = 0;
  double mu = 1;
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  std::string bounds;
  std::size_t swarm = PsoConfig{}.swarm_size;
  std::size_t iters = PsoConfig{}.max_iters;
  std::size_t stall = PsoConfig{}.stall_iters;
};

int cmd_fit(const Options& o, const ModelOptions& m, SimOptions s, const FitOptions& f) {
  const ParameterFile pf = resolve_params(m);
  const ReactionModel model = build_model(pf.model);

  FitProblem problem;
  problem.model = pf.model;
  problem.fixed = pf.params;
  problem.mu = ScaleFactor(f.mu).mu;
  problem.alpha = f.alpha;
  problem.sim = s.config;
  problem.pso.seed = f.seed;
  problem.pso.swarm_size = f.swarm;
  problem.pso.max_iters = f.iters;
  problem.pso.stall_iters = f.stall;
  problem.pso.threads = o.threads;
  if (f.bounds.empty()) {
    problem.theta = default_theta(pf.model, pf.params);
  } else {
    try {
      problem.theta = read_bounds(f.bounds);
    } catch (const ParseError& e) {
      throw ConfigError(f.bounds + ":" + std::to_string(e.line()) + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }

  try {
    problem.data = load_experiment(f.data, {f.current, f.bias});
  } catch (const ParseError& e) {
    throw IngestError(f.data + ":" + std::to_string(e.line()) + ": " + e.what());
  } catch (const ValidationError& e) {
    throw IngestError(f.data + (e.line() ? ":" + std::to_string(e.line()) : std::string()) + ": " + e.what());
  } catch (const Error& e) {
    throw IngestError(e.what());
  }
  if (problem.data.rising_voltage_warning)
    std::cerr << "warning: voltage rises in more than 5% of samples of " << f.data << '\n';
  validate(problem);

  Manifest manifest("fit", o);
  json theta = json::array();
  for (const auto& e : problem.theta) theta.push_back({{"path", e.path}, {"lower", e.lower}, {"upper", e.upper}});
  manifest.doc["seed"] = f.seed;
  manifest.doc["config"] = {
      {"model", model_number(pf.model)},
      {"params_source", m.params},
      {"data", f.data},
      {"prototype_current_A", problem.data.current},
      {"current_bias_A", problem.data.current_bias},
      {"mu", problem.mu},
      {"model_current_A", evaluation_config(problem).current},
      {"alpha", problem.alpha.value_or(default_alpha(problem.data))},
      {"theta", theta},
      {"pso",
       {{"swarm_size", problem.pso.swarm_size}, {"max_iters", problem.pso.max_iters},
        {"inertia", problem.pso.inertia}, {"cognitive", problem.pso.cognitive}, {"social", problem.pso.social},
        {"v_max_fraction", problem.pso.v_max_fraction}, {"stall_iters", problem.pso.stall_iters},
        {"seed", problem.pso.seed}}},
      {"simulation", sim_json(evaluation_config(problem))},
      {"fixed_params", params_json(model, pf.params)}};

  const fs::path out(o.out);
  FitResult r;
  try {
    r = fit(problem);
  } catch (const AllFailed& e) {
    std::cerr << "error: " << e.what() << '\n';
    manifest.write(out, kAllFailed);
    return kAllFailed;
  }
  manifest.outputs = write_fit_report(out, problem, r);
  manifest.doc["result"] = {{"J", r.J}, {"rmse_V", r.rmse}, {"duration_err_s", r.duration_err},
                            {"iterations", r.history.size()}, {"evaluations", r.evaluations}};

  const ParameterSet proto = scale_parameters(r.params, ScaleFactor(problem.mu), ScaleDirection::ModelToProto);
  std::cout << std::left << std::setw(10) << "parameter" << std::right << std::setw(16) << "model"
            << std::setw(16) << "prototype" << '\n';
  for (std::size_t k = 0; k < r.paths.size(); ++k) {
    const auto& p = r.paths[k];
    std::cout << std::left << std::setw(10) << p << std::right << std::setw(16)
              << format_double(r.theta_hat(static_cast<Eigen::Index>(k))) << std::setw(16)
              << format_double(get_parameter(model, proto, p)) << "  " << parameter_unit(p) << '\n';
  }
  std::cout << "J = " << format_double(r.J) << " V^2, RMSE = " << std::fixed << std::setprecision(2)
            << r.rmse * 1e3 << " mV, duration error = " << std::setprecision(1) << r.duration_err << " s\n";
  manifest.write(out, kOk);
  return kOk;
}

int cmd_rank(const Options& o, const ModelOptions& m, const CurrentOptions& c, SimOptions s, double perturbation) {
  const ParameterFile pf = resolve_params(m);
  const ReactionModel model = build_model(pf.model);
  s.config.current = resolve_current(c, pf.params);

  Manifest manifest("rank", o);
  manifest.doc["config"] = {{"model", model_number(pf.model)}, {"params_source", m.params},
                            {"perturbation", perturbation},
                            {"c_rate", c.c_rate ? json(*c.c_rate) : json(nullptr)},
                            {"simulation", sim_json(s.config)}, {"params", params_json(model, pf.params)}};
  const auto scores = rank_parameters(pf.model, pf.params, s.config, perturbation, o.threads);

  std::ostringstream os;
  CsvWriter w(os);
  w.row(std::vector<std::string>{"rank", "parameter", "score_V"});
  for (std::size_t k = 0; k < scores.size(); ++k) {
    w.row(std::vector<std::string>{std::to_string(k + 1), scores[k].first, format_double(scores[k].second)});
    std::cout << std::setw(3) << k + 1 << "  " << std::left << std::setw(8) << scores[k].first << std::right
              << "  " << std::scientific << std::setprecision(3) << scores[k].second << " V\n";
  }
  const fs::path out(o.out);
  write_file_atomic(out / "rank.csv", os.str());
  manifest.outputs.push_back(out / "rank.csv");
  manifest.write(out, kOk);
  return kOk;
}

struct SynthOptions {
  double current = 0.03e-3;
  double mu = 1;
  double noise = 0;
  std::uint64_t seed = 42;
  double interval = 30;
  std::string output = "synthetic.csv";
};

int cmd_synth(const Options& o, const ModelOptions& m, SimOptions s, const SynthOptions& y) {
  const ParameterFile pf = resolve_params(m);
  SyntheticSpec spec;
  spec.model = pf.model;
  spec.params = pf.params;
  spec.current = y.current;
  spec.mu = ScaleFactor(y.mu).mu;
  spec.noise_sd = y.noise;
  spec.seed = y.seed;
  spec.sample_interval = y.interval;
  spec.sim = s.config;

  Manifest manifest("synth", o);
  manifest.doc["seed"] = y.seed;
  manifest.doc["config"] = {{"model", model_number(pf.model)}, {"params_source", m.params},
                            {"prototype_current_A", y.current}, {"mu", y.mu}, {"noise_sd_V", y.noise},
                            {"interval_s", y.interval}, {"simulation", sim_json(s.config)},
                            {"params", params_json(build_model(pf.model), pf.params)}};
  const ExperimentalTrace d = synthesize_experiment(spec);
  const fs::path out(o.out);
  write_experiment_csv(out / y.output, d);
  manifest.outputs.push_back(out / y.output);
  std::cout << d.size() << " samples, T = " << format_double(d.duration()) << " s\n";
  manifest.write(out, kOk);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-dimensional Li-S discharge simulation and parameter identification"};
  app.set_version_flag("--version", std::string("lis0d ") + LIS0D_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  Options o;
  const char* env_out = std::getenv(kOutEnv);
  o.out = env_out && *env_out ? env_out : "lis0d-out";
  app.add_option("--out", o.out, std::string("Output directory (default from ") + kOutEnv + ")");
  app.add_option("--threads", o.threads, "Maximum worker threads")->check(CLI::PositiveNumber);
  o.argv.assign(argv, argv + argc);

  ModelOptions m;
  CurrentOptions c;
  SimOptions s;

  auto* sim = app.add_subcommand("simulate", "Simulate one constant-current discharge");
  add_model(sim, m);
  add_current(sim, c);
  add_sim(sim, s);

  SweepOptions w;
  auto* sweep = app.add_subcommand("sweep", "One-at-a-time perturbation sweep of a parameter");
  add_model(sweep, m);
  add_current(sweep, c);
  add_sim(sweep, s);
  sweep->add_option("--target", w.target, "Parameter path, e.g. E0[1], omega, m0[S8]")->required();
  sweep->add_option("--offsets", w.offsets, "Offsets (fractions, or volts with --additive)")->delimiter(',');
  sweep->add_flag("--additive", w.additive, "Offsets are added rather than multiplied");
  sweep->add_option("--name", w.name, "Sweep name (output subdirectory)")->capture_default_str();

  ScaleOptions sc;
  auto* scale = app.add_subcommand("scale", "Scale a parameter set between model and prototype");
  add_model(scale, m, false);
  scale->add_option("--mu", sc.mu, "Charge scale factor")->required();
  scale->add_option("--direction", sc.direction, "to-proto or to-model")->capture_default_str();
  scale->add_option("--current", sc.current, "Also scale this current, A");
  scale->add_option("--output", sc.output, "File name under --out")->capture_default_str();

  FitOptions f;
  auto* fitc = app.add_subcommand("fit", "Identify parameters from a measured discharge");
  SimOptions fs_opts{default_fit_simulation()};
  add_model(fitc, m);
  add_sim(fitc, fs_opts);
  fitc->add_option("--data", f.data, "CSV with t_s,V[,I_A]")->required();
  fitc->add_option("--current", f.current, "Applied current, A (overrides I_A)");
  fitc->add_option("--bias", f.bias, "Additive current-bias correction, A");
  fitc->add_option("--mu", f.mu, "Charge scale factor from data to model")->capture_default_str();
  fitc->add_option("--alpha", f.alpha, "Terminal-time weight, V^2/s^2");
  fitc->add_option("--seed", f.seed, "PSO seed")->capture_default_str();
  fitc->add_option("--bounds", f.bounds, "Bounds file: 'path = lower, upper' per line");
  fitc->add_option("--swarm", f.swarm, "Swarm size")->capture_default_str();
  fitc->add_option("--iters", f.iters, "Maximum PSO iterations")->capture_default_str();
  fitc->add_option("--stall", f.stall, "Stop after this many iterations without improvement")->capture_default_str();

  double perturbation = 0.1;
  auto* rank = app.add_subcommand("rank", "Rank parameters by voltage influence");
  add_model(rank, m);
  add_current(rank, c);
  add_sim(rank, s);
  rank->add_option("--perturbation", perturbation, "Relative perturbation")->capture_default_str();

  SynthOptions y;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic measured discharge");
  add_model(synth, m);
  add_sim(synth, s);
  synth->add_option("--current", y.current, "Prototype current, A")->capture_default_str();
  synth->add_option("--mu", y.mu, "Charge scale factor")->capture_default_str();
  synth->add_option("--noise", y.noise, "Gaussian noise, V")->capture_default_str();
  synth->add_option("--seed", y.seed, "Noise seed")->capture_default_str();
  synth->add_option("--interval", y.interval, "Sampling interval, s")->capture_default_str();
  synth->add_option("--output", y.output, "File name under --out")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*sim) return cmd_simulate(o, m, c, s);
    if (*sweep) return cmd_sweep(o, m, c, s, w);
    if (*scale) return cmd_scale(o, m, sc);
    if (*fitc) return cmd_fit(o, m, fs_opts, f);
    if (*rank) return cmd_rank(o, m, c, s, perturbation);
    if (*synth) return cmd_synth(o, m, s, y);
  } catch (const IngestError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIngest;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfig;
  } catch (const SolveError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
