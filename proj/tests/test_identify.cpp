#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lis/csv.hpp"
#include "lis/identify.hpp"

using namespace lis;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "lis0d_test_identify";
  fs::create_directories(dir);
  return dir / name;
}

ParameterSet identified_m3() {
  auto p = nominal_parameters(ModelId::M3);
  p.E0 << 2.467, 2.374, 2.342, 2.069;
  p.gamma = 0.483;
  p.omega = 0.613;
  p.m0(0) = 3.038;
  return p;
}

Eigen::VectorXd identified_theta() {
  Eigen::VectorXd th(7);
  th << 2.467, 2.374, 2.342, 2.069, 0.483, 0.613, 3.038;
  return th;
}

ExperimentalTrace synthetic_m3(double noise_sd, double interval = 30) {
  SyntheticSpec s;
  s.params = identified_m3();
  s.mu = 3.33e4;
  s.noise_sd = noise_sd;
  s.sample_interval = interval;
  s.sim.rtol = 1e-5;
  s.sim.atol = 1e-8;
  return synthesize_experiment(s);
}

FitProblem m3_problem(const ExperimentalTrace& data) {
  FitProblem fp;
  fp.model = ModelId::M3;
  fp.data = data;
  fp.fixed = nominal_parameters(ModelId::M3);
  fp.theta = default_theta(ModelId::M3, fp.fixed);
  fp.mu = 3.33e4;
  fp.sim.rtol = 1e-5;
  fp.sim.atol = 1e-8;
  return fp;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string ten_rows(double t0 = 0) {
  std::string s;
  for (int k = 0; k < 10; ++k) s += std::to_string(t0 + 10 * k) + "," + std::to_string(2.4 - 0.01 * k) + "\n";
  return s;
}

template <class E>
std::size_t line_of(const fs::path& p, const LoadOptions& o = {}) {
  try {
    load_experiment(p, o);
  } catch (const E& e) {
    return e.line();
  }
  return 9999;
}

}  // namespace

TEST_CASE("loading a two-column file with a current option") {
  const auto p = scratch("two.csv");
  write(p, "# cell: coin 7\nt_s,V\n" + ten_rows());
  LoadOptions o;
  o.current = 0.03e-3;
  const auto d = load_experiment(p, o);
  CHECK(d.size() == 10);
  CHECK(d.effective_current() == 3e-5);
  CHECK(d.meta.at("cell") == "coin 7");
  CHECK(d.duration() == 90);
  CHECK_FALSE(d.rising_voltage_warning);
}

TEST_CASE("current bias is additive") {
  const auto p = scratch("bias.csv");
  write(p, "t_s,V\n" + ten_rows());
  LoadOptions o;
  o.current = 3e-5;
  o.current_bias = -1e-6;
  CHECK(load_experiment(p, o).effective_current() == doctest::Approx(2.9e-5).epsilon(1e-12));
}

TEST_CASE("current column, and the option overriding it") {
  const auto p = scratch("three.csv");
  std::string body = "t_s,V,I_A\n";
  for (int k = 0; k < 12; ++k) body += std::to_string(k) + ",2.3,2e-5\n";
  write(p, body);
  CHECK(load_experiment(p).current == 2e-5);
  LoadOptions o;
  o.current = 4e-5;
  CHECK(load_experiment(p, o).current == 4e-5);
  body = "t_s,V,I_A\n";
  for (int k = 0; k < 12; ++k) body += std::to_string(k) + ",2.3," + (k == 5 ? "3e-5" : "2e-5") + "\n";
  write(p, body);
  CHECK_THROWS_AS(load_experiment(p), ValidationError);
}

TEST_CASE("ingestion errors carry the line") {
  const auto p = scratch("bad.csv");
  LoadOptions o;
  o.current = 3e-5;
  write(p, "t_s,V\n0,2.4\n10,2.39\n10,2.38\n" + ten_rows(20));
  CHECK(line_of<ValidationError>(p, o) == 4);
  write(p, "t_s,V\n0,2.4\n10,abc\n" + ten_rows(20));
  CHECK(line_of<ParseError>(p, o) == 3);
  write(p, "t_s,V\n0,2.4\n10,7.0\n" + ten_rows(20));
  CHECK(line_of<ValidationError>(p, o) == 3);
  write(p, "t_s,V\n0,2.4,1\n" + ten_rows(20));
  CHECK(line_of<ParseError>(p, o) == 2);
  write(p, "time,volts\n" + ten_rows());
  CHECK(line_of<ParseError>(p, o) == 1);
  write(p, "t_s,V\n0,2.4\n10,2.3\n");
  CHECK_THROWS_AS(load_experiment(p, o), ValidationError);  // fewer than 10 samples
  write(p, "t_s,V\n" + ten_rows());
  CHECK_THROWS_AS(load_experiment(p), ValidationError);  // no current anywhere
  CHECK_THROWS_AS(load_experiment(scratch("missing.csv"), o), Error);
}

TEST_CASE("rising voltage raises a warning, not an error") {
  const auto p = scratch("rise.csv");
  std::string body = "t_s,V\n";
  for (int k = 0; k < 20; ++k) body += std::to_string(k) + "," + std::to_string(k % 2 ? 2.3 : 2.2) + "\n";
  write(p, body);
  LoadOptions o;
  o.current = 1e-5;
  CHECK(load_experiment(p, o).rising_voltage_warning);
}

TEST_CASE("experiment csv round trip") {
  const auto d = synthetic_m3(2e-3, 300);
  const auto p = scratch("synthetic.csv");
  write_experiment_csv(p, d);
  const auto back = load_experiment(p);
  CHECK(back.t == d.t);
  CHECK(back.V == d.V);
  CHECK(back.current == d.current);
  CHECK(back.meta.at("seed") == "42");
}

TEST_CASE("synthetic data from the identified M3 parameters") {
  const auto d = synthetic_m3(0.0);
  CHECK(d.current == 0.03e-3);
  CHECK(d.t(1) == 30);
  CHECK(d.size() > 300);
  const auto noisy = synthetic_m3(2e-3);
  const Eigen::VectorXd diff = noisy.V - d.V;
  const double sd = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
  CHECK(sd == doctest::Approx(2e-3).epsilon(0.15));
  CHECK(synthetic_m3(2e-3).V == noisy.V);  // seeded
}

TEST_CASE("objective vanishes at the generating parameters") {
  const auto data = synthetic_m3(0.0);
  const auto fp = m3_problem(data);
  const auto ev = evaluate(fp, identified_theta());
  CHECK_FALSE(ev.failed);
  CHECK(ev.J < 1e-10);
  CHECK(ev.n_min == data.size());

  SUBCASE("alpha = 0 leaves only the voltage term") {
    auto fp0 = fp;
    fp0.alpha = 0.0;
    Eigen::VectorXd th = identified_theta();
    th(6) *= 1.05;
    const auto e = evaluate(fp0, th);
    CHECK(e.alpha == 0.0);
    CHECK(e.duration_err > 0);
    CHECK(e.J == doctest::Approx(e.residuals.squaredNorm()).epsilon(1e-15));
  }
  SUBCASE("a wrong omega costs more") {
    Eigen::VectorXd th = identified_theta();
    th(5) *= 2;
    CHECK(objective(fp, th) > ev.J);
  }
}

TEST_CASE("objective is pure and recomputable from its pieces") {
  const auto fp = m3_problem(synthetic_m3(2e-3));
  Eigen::VectorXd th = identified_theta();
  th(0) += 0.01;
  th(4) = 0.7;
  const auto a = evaluate(fp, th);
  const auto b = evaluate(fp, th);
  CHECK(a.J == b.J);
  const double recomputed = a.residuals.squaredNorm() + a.alpha * a.duration_err * a.duration_err;
  CHECK(std::abs(a.J - recomputed) <= 1e-12 * std::max(1.0, a.J));
  CHECK(a.residuals.size() == static_cast<Eigen::Index>(a.n_min));
  CHECK(a.alpha == default_alpha(fp.data));
}

TEST_CASE("penalty exceeds any finished evaluation") {
  const auto fp = m3_problem(synthetic_m3(2e-3));
  const double pen = penalty(fp);
  CHECK(pen == doctest::Approx(fp.data.size() * 25.0 + default_alpha(fp.data) * std::pow(fp.data.duration(), 2)));
  Eigen::VectorXd out = identified_theta();
  out(4) = 10;  // gamma outside its bounds
  const auto e = evaluate(fp, out);
  CHECK(e.failed);
  CHECK(e.J == pen);
  // Worst admissible corner still finishes below the penalty.
  Eigen::VectorXd corner(7);
  for (std::size_t k = 0; k < fp.theta.size(); ++k) corner(static_cast<Eigen::Index>(k)) = fp.theta[k].lower;
  const auto c = evaluate(fp, corner);
  CHECK(c.J < pen);
  CHECK_THROWS_AS(evaluate(fp, Eigen::VectorXd::Zero(3)), InvalidTheta);
  Eigen::VectorXd nan = identified_theta();
  nan(1) = NAN;
  CHECK_THROWS_AS(evaluate(fp, nan), InvalidTheta);
}

TEST_CASE("evaluation runs at model scale") {
  const auto fp = m3_problem(synthetic_m3(0.0));
  const auto cfg = evaluation_config(fp);
  CHECK(cfg.current == doctest::Approx(0.999));
  CHECK(cfg.t_max == 2 * fp.data.duration());
}

TEST_CASE("bounds files") {
  const auto b = parse_bounds("# fit window\nE0[1] = 2.3, 2.6\n gamma=0.2,1\n");
  REQUIRE(b.size() == 2);
  CHECK(b[0].path == "E0[1]");
  CHECK(b[0].lower == 2.3);
  CHECK(b[1].upper == 1.0);
  auto line = [](const char* text) {
    try {
      parse_bounds(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{9999};
  };
  CHECK(line("gamma = 1, 0.5\n") == 1);
  CHECK(line("omega = 0.1\n") == 1);
  CHECK(line("omega = 0.1, 2\nE0[1] = a, b\n") == 2);
  CHECK_THROWS_AS(parse_bounds("# nothing\n"), ParseError);
}

TEST_CASE("problem validation") {
  auto fp = m3_problem(synthetic_m3(0.0, 300));
  CHECK_NOTHROW(validate(fp));
  CHECK(fp.theta.size() == 7);
  auto dup = fp;
  dup.theta.push_back(dup.theta.front());
  CHECK_THROWS_AS(validate(dup), ConfigError);
  auto bad = fp;
  bad.theta[0].path = "E0[9]";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = fp;
  bad.alpha = -1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = fp;
  bad.mu = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("a short fit is reproducible, monotone and writes its report") {
  auto fp = m3_problem(synthetic_m3(2e-3, 120));
  fp.pso.swarm_size = 8;
  fp.pso.max_iters = 4;
  fp.pso.seed = 42;
  const auto a = fit(fp);
  const auto b = fit(fp);
  CHECK(a.theta_hat == b.theta_hat);
  CHECK(a.J == b.J);
  for (std::size_t k = 1; k < a.history.size(); ++k) CHECK(a.history[k] <= a.history[k - 1]);
  CHECK(a.history.back() == a.J);
  CHECK(a.evaluations == 8 * a.history.size());
  CHECK(a.rmse == doctest::Approx(std::sqrt(a.residuals.squaredNorm() / static_cast<double>(a.n_min))));

  const fs::path dir = scratch("report");
  fs::remove_all(dir);
  const auto files = write_fit_report(dir, fp, a);
  for (const char* f : {"theta.csv", "summary.csv", "history.csv", "best_trace.csv", "fitted.params"})
    CHECK(fs::exists(dir / f));
  CHECK(files.size() >= 5);
}

TEST_CASE("a fit whose every evaluation fails reports AllFailed") {
  auto fp = m3_problem(synthetic_m3(0.0, 300));
  fp.pso.swarm_size = 4;
  fp.pso.max_iters = 2;
  // Every potential pushed above the 5 V solver window.
  for (auto& e : fp.theta)
    if (e.path.rfind("E0", 0) == 0) {
      e.lower = 6;
      e.upper = 7;
    }
  CHECK_THROWS_AS(fit(fp), AllFailed);
}
