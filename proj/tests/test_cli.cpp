#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#ifdef GII_CLI_PATH

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(GII_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, got);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gii_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
};

const char* kConfig = R"({
  "structural": {"model": "M1", "beta": [1.0, 0.4], "n": 300, "periods": 5},
  "schedule": [{"lambda": 0.03, "sims": 3}, {"lambda": 0.01, "sims": 5}],
  "replications": 2
})";

}  // namespace

TEST_F(Cli, SimulateThenEstimateRecoversTruth) {
  const std::string data = path("sim.csv");
  ASSERT_EQ(run("simulate --model M1 --beta 1,0.4 --n 1000 --periods 5 --seed 11 -o " + data).code, 0);
  EXPECT_EQ(slurp(data).substr(0, 8), "i,t,y,x\n");
  const auto r = run("estimate --model M1 --data " + data + " --seed 5");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  const double b = j["beta_hat"][0], rho = j["beta_hat"][1];
  const double se_b = j["se"][0], se_r = j["se"][1];
  EXPECT_LT(std::abs(b - 1.0), 3 * se_b);
  EXPECT_LT(std::abs(rho - 0.4), 3 * se_r);
}

TEST_F(Cli, McWritesCsvAndSummary) {
  const std::string cfg = write("cfg.json", kConfig);
  const std::string csv = path("out.csv");
  const auto r = run("mc --config " + cfg + " --reps 2 --threads 2 -o " + csv);
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Std.dev"), std::string::npos);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "rep,b_hat,r_hat,se_b,se_r,status,seconds");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);

  const auto t = run("table " + csv + " --config " + cfg);
  ASSERT_EQ(t.code, 0) << t.out;
  EXPECT_NE(t.out.find("Mean"), std::string::npos);
  EXPECT_NE(t.out.find("Time"), std::string::npos);
  const auto c = run("table " + csv + " --format csv");
  EXPECT_EQ(c.out.substr(0, c.out.find('\n')), "parameter,true,mean,sd,mean_se,se_ratio,n");
}

TEST_F(Cli, AcceptanceFailureExitCode) {
  nlohmann::json j = nlohmann::json::parse(kConfig);
  j["acceptance"] = {{{"parameter", "b"}, {"statistic", "mean"}, {"target", 5.0}, {"tolerance", 0.01}}};
  const std::string cfg = write("cfg.json", j.dump());
  const auto r = run("mc --config " + cfg + " --reps 2 --ci -o " + path("o.csv"));
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("FAIL mean(b)"), std::string::npos);
}

TEST_F(Cli, MalformedConfigExitCode) {
  const std::string cfg = write("bad.json", R"({"structural": {"model": "M1", "beta": [1, 0.4],
    "n": 100, "periods": 5}, "schedule": [{"lambda": 0.03, "simz": 3}]})");
  const auto r = run("mc --config " + cfg);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("$.schedule[0]"), std::string::npos) << r.out;
  EXPECT_EQ(run("mc --config " + path("missing.json")).code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST_F(Cli, ShippedConfigsParse) {
  for (const auto& entry : fs::directory_iterator(GII_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    const auto r = run("table " + write("empty.csv", "rep,b_hat,status,seconds\n") +
                       " --config " + entry.path().string());
    EXPECT_EQ(r.code, 0) << entry.path() << ": " << r.out;
  }
}

#endif
