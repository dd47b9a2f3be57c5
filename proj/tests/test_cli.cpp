#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dfosc/cli.hpp"

using namespace dfosc;
namespace fs = std::filesystem;

namespace {

const fs::path kSpecs = DFOSC_SPEC_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dfosc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
protected:
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() / ("dfosc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path write_spec(const std::string& name, const std::string& text) {
    fs::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
  }
};

}  // namespace

TEST_F(Cli, CatalogListsPresets) {
  const auto r = run({"catalog"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out,
            "ring_relay\nring_tanh\nseries_rlc_negres\nrelaxation_two_tau\nharmonic_relaxation\n"
            "fitzhugh_nagumo\nrepressilator\n");
}

TEST_F(Cli, PredictRingRelay) {
  const auto r = run({"predict", "--spec", (kSpecs / "ring_relay.spec").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("A* = 0.63661977"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("T* = 3.6275987"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("negative-frequency branch"), std::string::npos);
  const auto csv = slurp(dir / "predictions.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "A_star,omega_star,period,stability,residual");
  EXPECT_NE(csv.find("0.63661977"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "nodes.csv"));
}

TEST_F(Cli, SubcriticalPredictsNothing) {
  const auto r = run({"predict", "--spec", (kSpecs / "subcritical.spec").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitNoOscillation);
  EXPECT_EQ(slurp(dir / "predictions.csv"), "A_star,omega_star,period,stability,residual\n");
}

TEST_F(Cli, TanhRingWarnsAboutTaylor) {
  const auto r = run({"predict", "--spec", (kSpecs / "ring_tanh.spec").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("Taylor describing function is inaccurate"), std::string::npos);
}

TEST_F(Cli, LinearBlockAndDfTables) {
  const auto spec = (kSpecs / "relaxation_two_tau.spec").string();
  EXPECT_EQ(run({"df", "--spec", spec, "--out", dir.string()}).code, kExitOk);
  EXPECT_EQ(run({"nyquist", "--spec", spec, "--out", dir.string()}).code, kExitOk);
  EXPECT_EQ(run({"bode", "--spec", spec, "--out", dir.string()}).code, kExitOk);
  auto header = [&](const char* f) {
    const auto s = slurp(dir / f);
    return s.substr(0, s.find('\n'));
  };
  EXPECT_EQ(header("df.csv"), "A,a0,ReN,ImN");
  EXPECT_EQ(header("nyquist.csv"), "omega,re,im");
  EXPECT_EQ(header("bode.csv"), "omega,magnitude_db,phase_deg");
}

TEST_F(Cli, TextFormatWritesReport) {
  const auto r = run({"predict", "--spec", (kSpecs / "fitzhugh_nagumo.spec").string(), "--out", dir.string(),
                      "--format", "text"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(slurp(dir / "predictions.txt"), r.out);
  EXPECT_FALSE(fs::exists(dir / "predictions.csv"));
}

TEST_F(Cli, CompareRelaxation) {
  const auto r = run({"compare", "--spec", (kSpecs / "relaxation_two_tau.spec").string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const auto csv = slurp(dir / "comparison.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "predict_node,simulate_node,predicted_amplitude,simulated_amplitude,amplitude_error,predicted_period,"
            "simulated_period,period_error");
  EXPECT_NE(r.out.find("275.66"), std::string::npos);
  const auto metrics = slurp(dir / "metrics.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), "node,amplitude,offset,period,thd");
}

TEST_F(Cli, RerunsAreByteIdentical) {
  const auto a = dir / "a", b = dir / "b";
  for (const auto& out : {a, b}) {
    ASSERT_EQ(run({"predict", "--spec", (kSpecs / "repressilator.spec").string(), "--out", out.string()}).code, 0);
    ASSERT_EQ(run({"simulate", "--spec", (kSpecs / "ring_relay.spec").string(), "--out", out.string()}).code, 0);
  }
  for (const char* f : {"predictions.csv", "nodes.csv", "trajectory.csv", "metrics.csv"}) {
    const auto x = slurp(a / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(b / f)) << f;
  }
}

TEST_F(Cli, ConfigurationErrorsExitTwo) {
  EXPECT_EQ(run({"predict", "--spec", (dir / "missing.spec").string()}).code, kExitConfig);
  EXPECT_EQ(run({"predict"}).code, kExitConfig);
  EXPECT_EQ(run({"explode", "--spec", "x"}).code, kExitConfig);
  EXPECT_EQ(run({}).code, kExitConfig);
  const auto ring = (kSpecs / "ring_relay.spec").string();
  EXPECT_EQ(run({"predict", "--spec", ring, "--format", "xml"}).code, kExitConfig);
  EXPECT_EQ(run({"predict", "--spec", ring, "--samples", "1000", "--out", dir.string()}).code, kExitConfig);
  EXPECT_EQ(run({"predict", "--spec", ring, "--tol", "-1", "--out", dir.string()}).code, kExitConfig);
  const auto bad = write_spec("bad.spec", "[linear]\nnum = [0, 1e-3]\nden = [1, 1e-3, ?]\n");
  const auto r = run({"predict", "--spec", bad.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
  // simulate without a [simulate] section
  EXPECT_EQ(run({"simulate", "--spec", (kSpecs / "subcritical.spec").string(), "--out", dir.string()}).code,
            kExitConfig);
}

TEST_F(Cli, DivergentIntegrationExitsThree) {
  const auto spec = write_spec("unstable.spec", "preset = \"ring_tanh\"\n[simulate]\ndt = 0.01\nt_max = 5\n");
  const auto r = run({"simulate", "--spec", spec.string(), "--out", dir.string()});
  EXPECT_EQ(r.code, kExitNumerical);
  EXPECT_NE(r.err.find("numerical failure"), std::string::npos);
}

TEST_F(Cli, OverridesApply) {
  const auto r = run({"predict", "--spec", (kSpecs / "relaxation_two_tau.spec").string(), "--out", dir.string(),
                      "--samples", "4096", "--tol", "1e-10", "--seed", "7"});
  EXPECT_EQ(r.code, kExitOk);
}
