#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "lis/features.hpp"
#include "lis/identify.hpp"
#include "lis/param_file.hpp"
#include "lis/trace_io.hpp"

using namespace lis;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "lis0d_test_cli";

struct Run {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Run lis0d(const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path out = kRoot / "stdout.txt", err = kRoot / "stderr.txt";
  const std::string cmd = std::string("\"") + LIS0D_CLI + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string out_dir(const std::string& name) {
  const fs::path d = kRoot / name;
  fs::remove_all(d);
  return "--out \"" + d.string() + "\" ";
}

nlohmann::json manifest(const std::string& name) { return nlohmann::json::parse(slurp(kRoot / name / "manifest.json")); }

}  // namespace

TEST_CASE("version and usage") {
  const Run v = lis0d("--version");
  CHECK(v.code == 0);
  CHECK(v.out.find("lis0d 0.1.0") != std::string::npos);
  CHECK(lis0d("").code == 2);
  CHECK(lis0d("simulate --model 3").code == 2);  // no current
  CHECK(lis0d("bogus").code == 2);
}

TEST_CASE("simulate M3 at 0.3C") {
  const Run r = lis0d(out_dir("sim3") + "simulate --model 3 --params nominal --c-rate 0.3");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("specific capacity") != std::string::npos);
  const CsvTable t = read_numeric_csv(kRoot / "sim3" / "trace.csv");
  const double q_end = t.rows(t.rows.rows() - 1, t.column("capacity_mAh_per_g"));
  CHECK(q_end == doctest::Approx(1675).epsilon(0.02));
  const auto m = manifest("sim3");
  CHECK(m["command"] == "simulate");
  CHECK(m["exit_code"] == 0);
  CHECK(m["config"]["simulation"]["current_A"].get<double>() == doctest::Approx(0.3 * 1.672 * 2.8));
  CHECK(m["outputs"].size() == 3);
  // The resolved parameter file reproduces the run's parameters exactly.
  const auto pf = read_parameters(kRoot / "sim3" / "resolved.params");
  CHECK(pf.params == nominal_parameters(ModelId::M3));
}

TEST_CASE("zero current is a configuration error") {
  const Run r = lis0d(out_dir("zero") + "simulate --model 1 --params nominal --current 0");
  CHECK(r.code == 2);
  CHECK(r.err.find("positive") != std::string::npos);
  CHECK(lis0d(out_dir("bad_model") + "simulate --model 7 --c-rate 0.3").code == 2);
  CHECK(lis0d(out_dir("no_file") + "simulate --model 1 --params /nonexistent.params --c-rate 0.3").code == 2);
}

TEST_CASE("output root from the environment") {
  const fs::path d = kRoot / "from_env";
  fs::remove_all(d);
  const std::string cmd = "LIS0D_OUT=\"" + d.string() + "\" \"" + LIS0D_CLI + "\" scale --model 2 --mu 10 > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(d / "scaled.params"));
  CHECK(fs::exists(d / "manifest.json"));
}

TEST_CASE("lower C-rate gives equal or higher voltage at matched capacity") {
  REQUIRE(lis0d(out_dir("fast") + "simulate --model 4 --c-rate 0.3").code == 0);
  REQUIRE(lis0d(out_dir("slow") + "simulate --model 4 --c-rate 0.125").code == 0);
  const CsvTable fast = read_numeric_csv(kRoot / "fast" / "trace.csv");
  const CsvTable slow = read_numeric_csv(kRoot / "slow" / "trace.csv");
  const Eigen::VectorXd qf = fast.rows.col(fast.column("capacity_mAh_per_g"));
  const Eigen::VectorXd qs = slow.rows.col(slow.column("capacity_mAh_per_g"));
  const Eigen::VectorXd vf = fast.rows.col(fast.column("V"));
  const Eigen::VectorXd vs = slow.rows.col(slow.column("V"));
  // Compare over the bulk of both plateaus, away from the dip and the end.
  const double q_end = std::min(qf(qf.size() - 1), qs(qs.size() - 1));
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(400, 0.02 * q_end, 0.95 * q_end);
  const Eigen::VectorXd diff = interpolate(qs, vs, grid) - interpolate(qf, vf, grid);
  const double at_least = 1e-3;  // V; allowed local crossing near the dip
  int below = 0;
  for (Eigen::Index k = 0; k < diff.size(); ++k) below += diff(k) < -at_least;
  CHECK(below <= diff.size() / 20);
  CHECK(diff.mean() > 0);
}

TEST_CASE("scale round trip") {
  REQUIRE(lis0d(out_dir("proto") + "scale --model 3 --mu 3.33e4 --current 1").code == 0);
  const fs::path proto = kRoot / "proto" / "scaled.params";
  CHECK(manifest("proto")["result"]["scaled_current_A"].get<double>() == doctest::Approx(1 / 3.33e4));
  REQUIRE(lis0d(out_dir("back") + "scale --params \"" + proto.string() + "\" --mu 3.33e4 --direction to-model").code == 0);
  const auto back = read_parameters(kRoot / "back" / "scaled.params").params;
  const auto nominal = nominal_parameters(ModelId::M3);
  CHECK(back.m0(0) == doctest::Approx(nominal.m0(0)).epsilon(1e-14));
  CHECK(back.omega == doctest::Approx(nominal.omega).epsilon(1e-14));
  CHECK(lis0d(out_dir("bad_dir") + "scale --model 3 --mu 2 --direction sideways").code == 2);
  CHECK(lis0d(out_dir("bad_mu") + "scale --model 3 --mu -2").code == 2);
}

TEST_CASE("sweep and rank write their tables") {
  REQUIRE(lis0d(out_dir("sweep") + "sweep --model 4 --c-rate 0.3 --target E0[1] --additive --offsets -0.025,0.025")
              .code == 0);
  CHECK(fs::exists(kRoot / "sweep" / "sweep" / "E0[1]" / "nominal.csv"));
  CHECK(fs::exists(kRoot / "sweep" / "sweep" / "E0[1]" / "+0.025.csv"));
  CHECK(fs::exists(kRoot / "sweep" / "sweep" / "summary.csv"));
  CHECK(lis0d(out_dir("sweep_bad") + "sweep --model 4 --c-rate 0.3 --target beta").code == 2);

  REQUIRE(lis0d(out_dir("rank") + "rank --model 1 --c-rate 0.3 --perturbation 0.1").code == 0);
  std::ifstream is(kRoot / "rank" / "rank.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("rank,parameter,score_V", 0) == 0);
}

TEST_CASE("fit: model-scale current, ingestion errors") {
  REQUIRE(lis0d(out_dir("synth") + "synth --model 3 --mu 3.33e4 --current 0.03e-3 --interval 300 --noise 0.002")
              .code == 0);
  const fs::path data = kRoot / "synth" / "synthetic.csv";
  REQUIRE(fs::exists(data));

  const Run r = lis0d(out_dir("fit") + "fit --model 3 --data \"" + data.string() +
                      "\" --mu 3.33e4 --current 0.03e-3 --seed 42 --swarm 4 --iters 2");
  REQUIRE(r.code == 0);
  const auto m = manifest("fit");
  CHECK(m["config"]["model_current_A"].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(m["seed"] == 42);
  for (const char* f : {"theta.csv", "summary.csv", "history.csv", "best_trace.csv", "fitted.params"})
    CHECK(fs::exists(kRoot / "fit" / f));
  CHECK(r.out.find("prototype") != std::string::npos);

  const Run missing = lis0d(out_dir("fit_missing") + "fit --model 3 --data /no/such/file.csv --current 3e-5");
  CHECK(missing.code == 4);
  CHECK(missing.err.find("/no/such/file.csv") != std::string::npos);

  const fs::path bad = kRoot / "bad.csv";
  std::ofstream(bad) << "t_s,V\n0,2.4\n5,oops\n";
  const Run parse = lis0d(out_dir("fit_bad") + "fit --model 3 --data \"" + bad.string() + "\" --current 3e-5");
  CHECK(parse.code == 4);
  CHECK(parse.err.find(":3:") != std::string::npos);

  const fs::path bounds = kRoot / "impossible.bounds";
  std::ofstream(bounds) << "E0[1] = 6, 7\nE0[2] = 6, 7\nE0[3] = 6, 7\nE0[4] = 6, 7\n";
  const Run fail = lis0d(out_dir("fit_fail") + "fit --model 3 --data \"" + data.string() + "\" --mu 3.33e4 --bounds \"" +
                         bounds.string() + "\" --swarm 2 --iters 1");
  CHECK(fail.code == 5);
}
