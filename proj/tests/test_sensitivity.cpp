#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "lis/errors.hpp"
#include "lis/sensitivity.hpp"
#include "lis/trace_io.hpp"

using namespace lis;
namespace fs = std::filesystem;

namespace {

SweepSpec m4_spec(const std::string& target, std::vector<double> offsets = {-0.1, 0.1}) {
  SweepSpec s;
  s.model = ModelId::M4;
  s.target = target;
  s.offsets = std::move(offsets);
  s.base = nominal_parameters(ModelId::M4);
  s.config.current = 0.3 * 1.672 * s.base.m0(0);
  return s;
}

bool same_trace(const SimulationTrace& a, const SimulationTrace& b) {
  if (a.size() != b.size() || a.termination != b.termination) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.samples[k].state.t != b.samples[k].state.t || a.samples[k].alg.V != b.samples[k].alg.V ||
        a.samples[k].state.m != b.samples[k].state.m)
      return false;
  return true;
}

}  // namespace

TEST_CASE("perturbed values") {
  CHECK(perturbed_value(2.0, 0.1, PerturbationMode::Multiplicative) == doctest::Approx(2.2));
  CHECK(perturbed_value(2.0, -0.2, PerturbationMode::Multiplicative) == doctest::Approx(1.6));
  CHECK(perturbed_value(2.46, 0.025, PerturbationMode::Additive) == doctest::Approx(2.485));
  CHECK(potential_offsets() == std::vector<double>{-0.05, -0.025, 0.025, 0.05});
}

TEST_CASE("sweep layout and determinism across thread counts") {
  auto spec = m4_spec("E0[1]");
  const SweepResult serial = run_sweep(spec);
  spec.threads = 3;
  const SweepResult parallel = run_sweep(spec);
  REQUIRE(serial.runs.size() == spec.offsets.size() + 1);
  CHECK(serial.nominal().offset == 0);
  CHECK(serial.nominal().value == 2.46);
  CHECK(serial.runs[1].value == doctest::Approx(2.46 * 0.9));
  CHECK(serial.deltas.size() == spec.offsets.size());
  for (std::size_t k = 0; k < serial.runs.size(); ++k) CHECK(same_trace(serial.runs[k].trace, parallel.runs[k].trace));
  const SweepResult again = run_sweep(spec);
  for (std::size_t k = 0; k < serial.runs.size(); ++k) CHECK(same_trace(serial.runs[k].trace, again.runs[k].trace));
}

TEST_CASE("sweep files") {
  auto spec = m4_spec("gamma", {-0.1});
  spec.name = "unit";
  const SweepResult r = run_sweep(spec);
  const fs::path root = fs::temp_directory_path() / "lis0d_test_sweep";
  fs::remove_all(root);
  const auto files = write_sweep(root, r);
  CHECK(fs::exists(root / "unit" / "gamma" / "nominal.csv"));
  CHECK(fs::exists(root / "unit" / "gamma" / "-0.1.csv"));
  CHECK(fs::exists(root / "unit" / "summary.csv"));
  CHECK(files.size() == 3);
  const CsvTable t = read_numeric_csv(root / "unit" / "gamma" / "nominal.csv");
  CHECK(static_cast<std::size_t>(t.rows.rows()) == r.nominal().trace.size());
}

TEST_CASE("invalid perturbations are marked failed, not thrown") {
  auto spec = m4_spec("E0[1]", {5.0});  // 2.46 * 6 V is outside the solver's range
  const SweepResult r = run_sweep(spec);
  REQUIRE(r.runs.size() == 2);
  CHECK_FALSE(r.nominal().failed);
  CHECK(r.runs[1].failed);
  CHECK_FALSE(r.deltas[0].high_plateau_mean);
}

TEST_CASE("M4 directions at 10 percent") {
  SUBCASE("E0[1] raises the high plateau") {
    const SweepResult r = run_sweep(m4_spec("E0[1]"));
    CHECK(*r.runs[1].features.high_plateau_mean < *r.nominal().features.high_plateau_mean);
    CHECK(*r.nominal().features.high_plateau_mean < *r.runs[2].features.high_plateau_mean);
  }
  SUBCASE("S_sat lowers the low plateau") {
    const SweepResult r = run_sweep(m4_spec("S_sat"));
    CHECK(*r.runs[1].features.low_plateau_mean > *r.nominal().features.low_plateau_mean);
    CHECK(*r.nominal().features.low_plateau_mean > *r.runs[2].features.low_plateau_mean);
  }
  SUBCASE("omega shortens the discharge") {
    const SweepResult r = run_sweep(m4_spec("omega"));
    CHECK(r.runs[1].features.duration > r.nominal().features.duration);
    CHECK(r.nominal().features.duration > r.runs[2].features.duration);
  }
  SUBCASE("sulfur loading moves the dip in time, not in specific capacity") {
    const SweepResult r = run_sweep(m4_spec("m0[S8]"));
    CHECK(*r.runs[1].features.dip_time < *r.nominal().features.dip_time);
    CHECK(*r.nominal().features.dip_time < *r.runs[2].features.dip_time);
    for (const auto& run : r.runs)
      CHECK(run.features.specific_capacity == doctest::Approx(r.nominal().features.specific_capacity).epsilon(1e-3));
  }
}

TEST_CASE("voltage sup distance") {
  const auto model = build_model(ModelId::M2);
  const auto p = nominal_parameters(ModelId::M2);
  SimulationConfig cfg;
  cfg.current = 0.3 * 1.672 * p.m0(0);
  const auto a = simulate(model, p, cfg);
  CHECK(voltage_sup_distance(a, a) == 0.0);
  auto b = a;
  for (auto& s : b.samples) s.alg.V += 0.01;
  CHECK(voltage_sup_distance(a, b) == doctest::Approx(0.01));
}

TEST_CASE("ranking") {
  const auto p = nominal_parameters(ModelId::M4);
  SimulationConfig cfg;
  cfg.current = 0.3 * 1.672 * p.m0(0);
  const auto model = build_model(ModelId::M4);
  CHECK(ranked_parameter_paths(model).size() == 5 + 5 + 5);

  const auto zero = rank_parameters(ModelId::M4, p, cfg, 0.0, 2);
  CHECK(zero.size() == 15);
  for (const auto& [path, score] : zero) CHECK(score == 0.0);
  CHECK_THROWS_AS(rank_parameters(ModelId::M4, p, cfg, 1.0), ConfigError);
  CHECK_THROWS_AS(rank_parameters(ModelId::M4, p, cfg, -0.1), ConfigError);

  const auto ranked = rank_parameters(ModelId::M4, p, cfg, 0.1, 2);
  std::map<std::string, double> score(ranked.begin(), ranked.end());
  for (int j = 1; j <= 5; ++j) {
    const std::string k = std::to_string(j);
    CHECK(score["E0[" + k + "]"] > score["i0[" + k + "]"]);
  }
  for (std::size_t k = 1; k < ranked.size(); ++k) CHECK(ranked[k - 1].second >= ranked[k].second);
  // Exchange currents of the middle reactions sit in the bottom third.
  for (const char* mid : {"i0[2]", "i0[3]", "i0[4]"}) {
    const auto it = std::find_if(ranked.begin(), ranked.end(), [&](const auto& e) { return e.first == mid; });
    CHECK(it - ranked.begin() >= 10);
  }
}
