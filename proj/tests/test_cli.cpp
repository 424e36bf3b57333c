#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "mixedcurv/cli.hpp"

namespace fs = std::filesystem;
using namespace mixedcurv;

namespace {

const std::string kScenarios = MIXEDCURV_SCENARIO_DIR;

struct Result {
  int code;
  std::string out, err;
};

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("mixedcurv-test-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  Result call(std::vector<std::string> args, bool with_out = true) {
    if (with_out) {
      args.push_back("--out");
      args.push_back(dir.string());
    }
    args.insert(args.begin(), "mixedcurv");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
  }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p.string();
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
  }
};

}  // namespace

TEST_F(CliTest, MuSolvePrintsSolutionAndDeterminant) {
  const auto r = call({"mu-solve", kScenarios + "/mu_n4_dims22.json"});
  EXPECT_EQ(r.code, cli::kPass) << r.err;
  EXPECT_NE(r.out.find("mu = (0, 0)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("det A = -4"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir / "mu_n4_dims22.mu-solve.txt"));
}

TEST_F(CliTest, MuSolveOddKFailsDeterminantGate) {
  const auto r = call({"mu-solve", kScenarios + "/mu_n5_dims221.json"});
  EXPECT_EQ(r.code, cli::kToleranceFailure);
  EXPECT_NE(r.err.find("tolerance failure in check"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("mu.det"), std::string::npos) << r.err;
}

TEST_F(CliTest, FlatIdentitiesPassAndListTolerances) {
  const auto r = call({"check-identities", kScenarios + "/flat_product.json", "--grid", "4"});
  EXPECT_EQ(r.code, cli::kPass) << r.err;
  EXPECT_NE(r.out.find("tolerances:"), std::string::npos);
  EXPECT_NE(r.out.find("identity.pw = 1.000000e-11"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("result: PASS"), std::string::npos);
  EXPECT_TRUE(r.err.empty()) << r.err;
}

TEST_F(CliTest, BuiltinScenarioNames) {
  for (const auto& name : cli::builtin_names()) {
    const auto r = call({"action", name, "--grid", "4", "--quiet"});
    EXPECT_EQ(r.code, cli::kPass) << name << ": " << r.err;
    EXPECT_TRUE(r.out.empty());
  }
}

TEST_F(CliTest, ToleranceOverrideAndFailureDiagnostics) {
  const auto p = write("tight.json", R"J({"name": "tight", "metric": {"family": "nonintegrable_heisenberg"},
      "chart": {"grid": 4}, "tolerances": {"identity.pw": 1e-30}})J");
  const auto r = call({"check-identities", p});
  EXPECT_EQ(r.code, cli::kToleranceFailure);
  EXPECT_NE(r.out.find("identity.pw = 1.000000e-30"), std::string::npos) << r.out;
  EXPECT_NE(r.err.find("E-PW["), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("at grid point ("), std::string::npos) << r.err;
}

TEST_F(CliTest, NonCriticalMetricFailsEulerLagrange) {
  const auto r = call({"el-residual", "nonintegrable_heisenberg", "--grid", "4"});
  EXPECT_EQ(r.code, cli::kToleranceFailure);
  EXPECT_NE(r.err.find("el.residual"), std::string::npos) << r.err;
}

TEST_F(CliTest, ParseErrors) {
  EXPECT_EQ(call({"check-identities", (dir / "missing.json").string()}).code, cli::kParseError);
  EXPECT_EQ(call({"frobnicate", "warp2d"}).code, cli::kParseError);
  EXPECT_EQ(call({"check-identities"}).code, cli::kParseError);
  EXPECT_EQ(call({"check-identities", "warp2d", "--grid", "2"}).code, cli::kParseError);
  EXPECT_EQ(call({"el-residual", "warp2d", "--grid", "4", "--mode", "sideways"}).code, cli::kParseError);
  EXPECT_EQ(call({"check-identities", write("bad.json", "{\"metric\": ")}).code, cli::kParseError);
  EXPECT_EQ(call({"check-identities", write("expr.json", R"J({"metric": {"family": "custom", "dims": [1, 1],
      "blocks": [[["1 + sin("]], [["1"]]]}})J")})
                .code,
            cli::kParseError);
  EXPECT_EQ(call({"mu-solve", write("mu.json", R"J({"mu": {"n": 5, "dims": [2, 2]}})J")}).code, cli::kParseError);
}

TEST_F(CliTest, DegenerateMetricIsNumericalFault) {
  const auto p = write("degenerate.json", R"J({"name": "degenerate", "metric": {"family": "custom", "dims": [1, 1],
      "blocks": [[["1"]], [["sin(x)^2"]]]}, "chart": {"grid": 4}})J");
  const auto r = call({"check-identities", p});
  EXPECT_EQ(r.code, cli::kNumericalFault);
  EXPECT_NE(r.err.find("at point (0, "), std::string::npos) << r.err;
}

TEST_F(CliTest, OrderedReduceIsThreadIndependent) {
  const auto a = dir / "t1", b = dir / "t3";
  ASSERT_EQ(call({"check-identities", "nonintegrable_heisenberg", "--grid", "12", "--quiet", "--ordered-reduce", "--threads", "1",
                  "--out", a.string()},
                 false)
                .code,
            cli::kPass);
  ASSERT_EQ(call({"check-identities", "nonintegrable_heisenberg", "--grid", "12", "--quiet", "--ordered-reduce", "--threads", "3",
                  "--out", b.string()},
                 false)
                .code,
            cli::kPass);
  const auto ca = slurp(a / "nonintegrable_heisenberg.check-identities.csv");
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, slurp(b / "nonintegrable_heisenberg.check-identities.csv"));
}

TEST_F(CliTest, DumpFieldsWritesOneRowPerPointAndField) {
  const auto r = call({"check-identities", "warp2d", "--grid", "4", "--quiet", "--dump-fields"});
  ASSERT_EQ(r.code, cli::kPass) << r.err;
  std::ifstream f(dir / "warp2d.check-identities.fields.csv");
  std::string header, line;
  std::getline(f, header);
  EXPECT_EQ(header, "x1,x2,check,residual");
  int rows = 0;
  while (std::getline(f, line)) ++rows;
  const auto rep = identity_suite(builtin_scenario("warp2d", 4));
  EXPECT_EQ(rows, 16 * static_cast<int>(rep.names.size()));
  const auto summary = slurp(dir / "warp2d.check-identities.csv");
  EXPECT_EQ(summary.rfind("x1,x2,check,residual\n", 0), 0u);
}

TEST_F(CliTest, OutputDirectoryFromEnvironment) {
  const auto env = dir / "from-env";
  ::setenv("MIXEDCURV_OUT", env.string().c_str(), 1);
  const auto r = call({"action", "warp2d", "--grid", "4", "--quiet"}, false);
  ::unsetenv("MIXEDCURV_OUT");
  EXPECT_EQ(r.code, cli::kPass);
  EXPECT_TRUE(fs::exists(env / "warp2d.action.txt"));
}

TEST_F(CliTest, OptimizeWarp2d) {
  const auto r = call({"optimize", kScenarios + "/warp2d.json"});
  EXPECT_EQ(r.code, cli::kPass) << r.err;
  EXPECT_NE(r.out.find("optimize.grad"), std::string::npos);
}

TEST_F(CliTest, EinsteinOnFlatTorus) {
  EXPECT_EQ(call({"einstein", "flat_product", "--grid", "4", "--quiet"}).code, cli::kPass);
}
