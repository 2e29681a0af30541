#include "lis/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lis/csv.hpp"
#include "lis/errors.hpp"
#include "lis/parallel.hpp"
#include "lis/trace_io.hpp"

namespace lis {

std::vector<double> potential_offsets() { return {-0.05, -0.025, 0.025, 0.05}; }

double perturbed_value(double nominal, double offset, PerturbationMode mode) {
  return mode == PerturbationMode::Multiplicative ? nominal * (1.0 + offset) : nominal + offset;
}

namespace {

SweepRun run_one(const ReactionModel& model, const ParameterSet& base, const SimulationConfig& config,
                 const std::string& target, double offset, PerturbationMode mode) {
  SweepRun run;
  run.offset = offset;
  ParameterSet params = base;
  run.value = perturbed_value(get_parameter(model, base, target), offset, mode);
  try {
    set_parameter(model, params, target, run.value);
    validate(model, params);
  } catch (const ConfigError& e) {
    run.failed = true;
    run.trace.message = e.what();
    return run;
  }
  run.trace = simulate(model, params, config);
  run.failed = run.trace.termination == Termination::SolverFailure;
  run.features = extract_features(run.trace, config.v_cutoff);
  return run;
}

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

FeatureDelta delta(const SweepRun& run, const SweepRun& nominal) {
  FeatureDelta d;
  d.offset = run.offset;
  if (run.trace.samples.empty() || nominal.trace.samples.empty()) return d;
  const auto& f = run.features;
  const auto& n = nominal.features;
  d.high_plateau_mean = diff(f.high_plateau_mean, n.high_plateau_mean);
  d.low_plateau_mean = diff(f.low_plateau_mean, n.low_plateau_mean);
  d.dip_voltage = diff(f.dip_voltage, n.dip_voltage);
  d.dip_capacity = diff(f.dip_capacity, n.dip_capacity);
  d.specific_capacity = f.specific_capacity - n.specific_capacity;
  d.duration = f.duration - n.duration;
  return d;
}

std::string offset_label(double offset) {
  if (offset == 0) return "nominal";
  return (offset > 0 ? "+" : "") + format_double(offset);
}

std::string opt_field(const std::optional<double>& x) { return x ? format_double(*x) : std::string(); }

}  // namespace

SweepResult run_sweep(const SweepSpec& spec) {
  const ReactionModel model = build_model(spec.model);
  validate(spec.config);
  validate(model, spec.base);
  get_parameter(model, spec.base, spec.target);  // rejects unknown paths early

  SweepResult result;
  result.name = spec.name;
  result.model = spec.model;
  result.target = spec.target;
  std::vector<double> offsets{0.0};
  offsets.insert(offsets.end(), spec.offsets.begin(), spec.offsets.end());
  result.runs.resize(offsets.size());
  parallel_for(offsets.size(), spec.threads, [&](std::size_t k) {
    result.runs[k] = run_one(model, spec.base, spec.config, spec.target, offsets[k], spec.mode);
  });
  for (std::size_t k = 1; k < result.runs.size(); ++k) result.deltas.push_back(delta(result.runs[k], result.nominal()));
  return result;
}

std::vector<std::filesystem::path> write_sweep(const std::filesystem::path& root, const SweepResult& result) {
  const ReactionModel model = build_model(result.model);
  const auto dir = root / result.name;
  std::vector<std::filesystem::path> written;
  for (const auto& run : result.runs) {
    const auto path = dir / result.target / (offset_label(run.offset) + ".csv");
    write_trace_csv(path, model, run.trace);
    written.push_back(path);
  }

  std::ostringstream os;
  CsvWriter w(os);
  w.row(std::vector<std::string>{"offset", "value", "termination", "failed", "specific_capacity_mAh_per_g",
                                 "duration_s", "high_plateau_V", "low_plateau_V", "dip_V", "dip_capacity_mAh_per_g",
                                 "dip_time_s", "d_high_plateau_V", "d_low_plateau_V", "d_dip_V",
                                 "d_dip_capacity_mAh_per_g", "d_specific_capacity_mAh_per_g", "d_duration_s"});
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    const auto& run = result.runs[k];
    const auto& f = run.features;
    const FeatureDelta d = k == 0 ? FeatureDelta{} : result.deltas[k - 1];
    w.row(std::vector<std::string>{
        format_double(run.offset), format_double(run.value), to_string(run.trace.termination),
        run.failed ? "1" : "0", format_double(f.specific_capacity), format_double(f.duration),
        opt_field(f.high_plateau_mean), opt_field(f.low_plateau_mean), opt_field(f.dip_voltage),
        opt_field(f.dip_capacity), opt_field(f.dip_time), opt_field(d.high_plateau_mean),
        opt_field(d.low_plateau_mean), opt_field(d.dip_voltage), opt_field(d.dip_capacity),
        opt_field(d.specific_capacity), opt_field(d.duration)});
  }
  const auto summary = dir / "summary.csv";
  write_file_atomic(summary, os.str());
  written.push_back(summary);
  return written;
}

double voltage_sup_distance(const SimulationTrace& a, const SimulationTrace& b) {
  if (a.samples.empty() || b.samples.empty()) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd qa = a.capacities(), qb = b.capacities();
  const double q_end = std::min(qa(qa.size() - 1), qb(qb.size() - 1));
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(qa.size() + qb.size()));
  for (const auto* q : {&qa, &qb})
    for (Eigen::Index k = 0; k < q->size(); ++k)
      if ((*q)(k) <= q_end) grid.push_back((*q)(k));
  const Eigen::Map<const Eigen::VectorXd> at(grid.data(), static_cast<Eigen::Index>(grid.size()));
  return (interpolate(qa, a.voltages(), at) - interpolate(qb, b.voltages(), at)).cwiseAbs().maxCoeff();
}

std::vector<std::string> ranked_parameter_paths(const ReactionModel& model) {
  std::vector<std::string> paths;
  for (std::size_t j = 1; j <= model.reaction_count(); ++j) paths.push_back("E0[" + std::to_string(j) + "]");
  for (std::size_t j = 1; j <= model.reaction_count(); ++j) paths.push_back("i0[" + std::to_string(j) + "]");
  for (const char* p : {"gamma", "omega", "k_p", "S_sat", "m0[S8]"}) paths.emplace_back(p);
  return paths;
}

std::vector<std::pair<std::string, double>> rank_parameters(ModelId id, const ParameterSet& base,
                                                            const SimulationConfig& config, double perturbation,
                                                            unsigned threads) {
  if (!(perturbation >= 0) || perturbation >= 1) throw ConfigError("perturbation must lie in [0, 1)");
  const ReactionModel model = build_model(id);
  validate(config);
  validate(model, base);
  const auto paths = ranked_parameter_paths(model);
  std::vector<SweepRun> runs(2 * paths.size());
  parallel_for(runs.size(), threads, [&](std::size_t k) {
    const double offset = k % 2 == 0 ? perturbation : -perturbation;
    runs[k] = run_one(model, base, config, paths[k / 2], offset, PerturbationMode::Multiplicative);
  });
  std::vector<std::pair<std::string, double>> scores;
  for (std::size_t k = 0; k < paths.size(); ++k)
    scores.emplace_back(paths[k], voltage_sup_distance(runs[2 * k].trace, runs[2 * k + 1].trace));
  std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return scores;
}

}  // namespace lis
