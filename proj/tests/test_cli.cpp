// Drives the cqr executable as a subprocess.

#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

const std::string kCli = CQR_CLI_PATH;
const std::string kData = CQR_TEST_DATA_DIR;

struct CliRun {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() /
                       ("cqr_cli_test_" + std::to_string(::getpid()) + "_" +
                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
  fs::create_directories(dir);
  return dir;
}

CliRun run(const std::string& args) {
  const fs::path err_path = scratch_dir() / "stderr.txt";
  const std::string cmd = kCli + " " + args + " 2>" + err_path.string();
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err_path);
  return r;
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      else if (c == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell.push_back(c);
      }
    }
    cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::string kBenchmark = "--data " + kData + "/benchmark_small.csv --fixed x";
const std::string kActg = "--data " + kData +
                          "/actg_toy.csv --response logcd4 --cluster patient "
                          "--fixed treat2,treat3,treat4,wk1,wk2,wk3,wk4";

void expect_single_error_line(const CliRun& r) {
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

TEST(CliFit, RecordSchemaAtTauPointOne) {
  const CliRun r = run("fit " + kBenchmark + " --tau 0.1 --scheme rw --B 100");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 3u);
  const std::vector<std::string> header{"tau",      "estimator", "kind",     "term",    "estimate",
                                        "estimate_adj", "se_obs", "se_adj", "basic_lo", "basic_hi",
                                        "seadj_lo", "seadj_hi",  "B",        "scheme"};
  EXPECT_EQ(rows[0], header);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), header.size());
    EXPECT_EQ(rows[i][0], "0.1");
    EXPECT_EQ(rows[i][1], "adj");
    EXPECT_EQ(rows[i][12], "100");
    EXPECT_EQ(rows[i][13], "rw");
    for (std::size_t k = 4; k < 12; ++k) {
      EXPECT_NE(rows[i][k], "NA") << header[k];
      EXPECT_NO_THROW((void)std::stod(rows[i][k]));
    }
  }
  EXPECT_EQ(rows[1][3], "(Intercept)");
  EXPECT_EQ(rows[2][3], "x");
}

TEST(CliFit, TwoTauBlocksAreIndependentFits) {
  const CliRun both = run("fit " + kBenchmark + " --tau 0.1,0.5 --B 20");
  const CliRun lo = run("fit " + kBenchmark + " --tau 0.1 --B 20");
  const CliRun hi = run("fit " + kBenchmark + " --tau 0.5 --B 20");
  ASSERT_EQ(both.exit_code, 0) << both.err;
  const auto rows = csv_rows(both.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[1][0], "0.1");
  EXPECT_EQ(rows[3][0], "0.5");
  const auto a = csv_rows(lo.out), b = csv_rows(hi.out);
  EXPECT_EQ(rows[1], a[1]);
  EXPECT_EQ(rows[2], a[2]);
  EXPECT_EQ(rows[3], b[1]);
  EXPECT_EQ(rows[4], b[2]);
}

TEST(CliFit, ActgToyContrasts) {
  const CliRun r = run("fit " + kActg + " --tau 0.25,0.5 --B 20 --contrast wk1:wk2,wk3,wk4");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 1u + 2 * (8 + 3));
  for (const std::string tau : {"0.25", "0.5"}) {
    std::vector<std::string> coef, contrast;
    for (const auto& row : rows) {
      if (row[0] != tau) continue;
      (row[2] == "coef" ? coef : contrast).push_back(row[3]);
    }
    EXPECT_EQ(coef.size(), 8u);
    EXPECT_EQ(contrast, (std::vector<std::string>{"wk2 - wk1", "wk3 - wk1", "wk4 - wk1"}));
  }
  // Contrast estimate is the difference of the coefficient estimates.
  double wk1 = 0, wk3 = 0, c3 = 0;
  for (const auto& row : rows) {
    if (row[0] != "0.25") continue;
    if (row[3] == "wk1") wk1 = std::stod(row[4]);
    if (row[3] == "wk3") wk3 = std::stod(row[4]);
    if (row[3] == "wk3 - wk1") c3 = std::stod(row[4]);
  }
  EXPECT_NEAR(c3, wk3 - wk1, 1e-8);
}

TEST(CliFit, JsonAndOutFiles) {
  const fs::path dir = scratch_dir();
  const CliRun r = run("fit " + kBenchmark + " --tau 0.5 --B 5 --out " + (dir / "fit.csv").string() +
                    " --json " + (dir / "fit.json").string());
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(slurp(dir / "fit.csv").rfind("tau,estimator,", 0), 0u);
  EXPECT_NE(slurp(dir / "fit.json").find("\"results\""), std::string::npos);
}

TEST(CliFit, ConfigFileWithFlagOverride) {
  const fs::path dir = scratch_dir();
  std::ofstream(dir / "fit.cfg") << "data = " << kData << "/benchmark_small.csv\nfixed = x\n"
                                 << "tau = 0.25\nestimator = marg\n";
  const CliRun cfg = run("fit --config " + (dir / "fit.cfg").string());
  ASSERT_EQ(cfg.exit_code, 0) << cfg.err;
  EXPECT_EQ(csv_rows(cfg.out)[1][1], "marg");
  EXPECT_EQ(csv_rows(cfg.out)[1][0], "0.25");
  const CliRun over = run("fit --config " + (dir / "fit.cfg").string() + " --estimator canay");
  ASSERT_EQ(over.exit_code, 0) << over.err;
  EXPECT_EQ(csv_rows(over.out)[1][1], "canay");

  std::ofstream(dir / "bad.cfg") << "data = x.csv\nnot_a_flag = 1\n";
  const CliRun bad = run("fit --config " + (dir / "bad.cfg").string());
  EXPECT_EQ(bad.exit_code, 2);
  expect_single_error_line(bad);
}

TEST(CliFit, ThreadCountDoesNotChangeOutput) {
  const CliRun a = run("fit " + kBenchmark + " --tau 0.1 --B 30 --threads 1");
  const CliRun b = run("fit " + kBenchmark + " --tau 0.1 --B 30 --threads 8");
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
}

TEST(CliFit, ExitCodes) {
  struct Case {
    std::string args;
    int code;
  };
  const std::vector<Case> cases{
      {"fit " + kBenchmark + " --tau 1.5", 2},
      {"fit " + kBenchmark + " --estimator nope", 2},
      {"fit " + kBenchmark + " --estimator oracle", 2},
      {"fit " + kBenchmark + " --B 1", 2},
      {"fit --data " + kData + "/benchmark_small.csv --fixed missing_col", 2},
      {"fit " + kBenchmark + " --contrast wk1", 2},
      {"fit " + kBenchmark + " --contrast x:nope", 2},
      {"fit --data /nonexistent/file.csv --fixed x", 1},
      {"fit", 2},
      {"bogus", 2},
  };
  for (const Case& c : cases) {
    const CliRun r = run(c.args);
    EXPECT_EQ(r.exit_code, c.code) << c.args << "\n" << r.err;
    expect_single_error_line(r);
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fs::path smoke_scenario(const fs::path& dir) {
  const fs::path path = dir / "smoke.txt";
  std::ofstream(path) << "N = 40\nn_i = 4\ntau = 0.1\nreps = 20\nB = 10\nseed = 11\n"
                         "estimators = lqmm,twostep,adj\nschemes = rw\n";
  return path;
}

TEST(CliSimulate, SmokeReportAndDeterminism) {
  const fs::path dir = scratch_dir();
  const fs::path scen = smoke_scenario(dir);
  const CliRun a = run("simulate --scenario " + scen.string() + " --threads 1 --out " + (dir / "a").string());
  const CliRun b = run("simulate --scenario " + scen.string() + " --threads 4 --out " + (dir / "b").string());
  ASSERT_EQ(a.exit_code, 0) << a.err;
  ASSERT_EQ(b.exit_code, 0) << b.err;
  const std::string csv = slurp(dir / "a.csv");
  EXPECT_EQ(csv, slurp(dir / "b.csv"));
  EXPECT_EQ(slurp(dir / "a.txt"), slurp(dir / "b.txt"));
  EXPECT_EQ(a.out, b.out);

  const auto rows = csv_rows(csv);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0][7], "mcse_bias");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][2], "20");
    const bool adj = rows[i][0] == "adj(rw)";
    EXPECT_EQ(rows[i][8] != "NA", adj);
    EXPECT_EQ(rows[i][11] != "NA", adj);
  }
  EXPECT_NE(a.out.find("mcse_bias"), std::string::npos);
}

TEST(CliSimulate, SeedFlagAndOverrides) {
  const fs::path dir = scratch_dir();
  const fs::path scen = smoke_scenario(dir);
  const std::string base = "simulate --scenario " + scen.string() + " --set reps=3 --set estimators=marg,canay";
  const CliRun a = run(base + " --seed 5");
  const CliRun b = run(base + " --seed 5");
  const CliRun c = run(base + " --seed 6");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out, c.out);
  EXPECT_NE(a.out.find("reps=3"), std::string::npos);
}

TEST(CliSimulate, ConfigErrorsNameTheKey) {
  const fs::path dir = scratch_dir();
  std::ofstream(dir / "bad.txt") << "N = 40\nwrong_key = 3\nseed = 1\n";
  const CliRun r = run("simulate --scenario " + (dir / "bad.txt").string());
  EXPECT_EQ(r.exit_code, 2);
  expect_single_error_line(r);
  EXPECT_NE(r.err.find("wrong_key"), std::string::npos);

  const CliRun set = run("simulate --scenario " + smoke_scenario(dir).string() + " --set gamma=-1");
  EXPECT_EQ(set.exit_code, 2);
  EXPECT_NE(set.err.find("gamma"), std::string::npos);

  std::ofstream(dir / "noseed.txt") << "N = 40\nreps = 2\n";
  const CliRun noseed = run("simulate --scenario " + (dir / "noseed.txt").string());
  EXPECT_EQ(noseed.exit_code, 2);
  expect_single_error_line(noseed);

  const CliRun missing = run("simulate --scenario /nonexistent/scenario.txt");
  EXPECT_EQ(missing.exit_code, 1);
  expect_single_error_line(missing);
}

}  // namespace
