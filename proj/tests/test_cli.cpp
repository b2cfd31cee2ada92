#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// Integration tests driving the built binary end to end.  The binary path
// arrives as a command-line argument (see tests/CMakeLists.txt).

namespace {

// Binary path supplied by CMake through the SURVMC_BIN environment variable.
std::string binary_path() {
  const char* env = std::getenv("SURVMC_BIN");
  if (env == nullptr) throw std::runtime_error("SURVMC_BIN is not set");
  return env;
}

struct Workdir {
  std::filesystem::path path;
  Workdir() {
    path = std::filesystem::temp_directory_path() /
           ("survmc_cli_test_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~Workdir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

int run(const std::string& args, const std::string& log) {
  const std::string cmd = binary_path() + " " + args + " > " + log + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_design(const std::string& path) {
  std::ofstream out(path);
  out << R"({"dist": "exponential", "lambda": 0.4, "max_time": 8.0,
             "betas": {"trt": 0.5}, "n": 250,
             "covariates": [{"name": "trt", "p": 0.5}]})";
}

}  // namespace

TEST_CASE("simulate, fit, predict, check, compare round trip") {
  Workdir wd;
  write_design(wd.file("design.json"));
  REQUIRE(run("simulate --design " + wd.file("design.json") +
                  " --seed 4 --out " + wd.file("sim.csv"),
              wd.file("sim.log")) == 0);

  const std::string fit_args =
      " --data " + wd.file("sim.csv") +
      " --formula \"surv(time, status) ~ trt\" --chains 2 --iters 250 "
      "--warmup 250 --seed 3";
  REQUIRE(run("fit" + fit_args + " --basehaz exp --out " + wd.file("f_exp"),
              wd.file("fit1.log")) == 0);
  const std::string out = slurp(wd.file("fit1.log"));
  REQUIRE(out.find("baseline hazard: exponential") != std::string::npos);
  REQUIRE(out.find("observations:    250") != std::string::npos);
  REQUIRE(out.find("exp(Median)") != std::string::npos);
  // intercept row reports NA in the exp(Median) column
  REQUIRE(out.find("(Intercept)") != std::string::npos);
  std::istringstream lines(out);
  std::string line;
  while (std::getline(lines, line))
    if (line.find("(Intercept)") == 0) REQUIRE(line.find("NA") != std::string::npos);

  REQUIRE(run("fit" + fit_args + " --basehaz weibull --out " + wd.file("f_wb"),
              wd.file("fit2.log")) == 0);

  {
    std::ofstream nd(wd.file("nd.csv"));
    nd << "trt\n0\n1\n";
  }
  REQUIRE(run("predict --fit " + wd.file("f_exp") + " --newdata " +
                  wd.file("nd.csv") +
                  " --times 0 --extrapolate --edist 5 --grid 6 --out " +
                  wd.file("pred.csv"),
              wd.file("pred.log")) == 0);
  const std::string pred = slurp(wd.file("pred.csv"));
  REQUIRE(pred.find("id,cond_time,time,median,ci_lb,ci_ub") == 0);
  REQUIRE(pred.find("1,NA,0.000000,1.000000") != std::string::npos);

  REQUIRE(run("check --fit " + wd.file("f_exp") + " --grid 15 --out " +
                  wd.file("check.csv"),
              wd.file("check.log")) == 0);
  REQUIRE(slurp(wd.file("check.log")).find("max |KM - predictive median|") !=
          std::string::npos);

  REQUIRE(run("compare --fits " + wd.file("f_exp") + " " + wd.file("f_wb"),
              wd.file("cmp.log")) == 0);
  const std::string cmp = slurp(wd.file("cmp.log"));
  REQUIRE(cmp.find("elpd_diff") != std::string::npos);
  REQUIRE(cmp.find("f_exp") != std::string::npos);
  REQUIRE(cmp.find("f_wb") != std::string::npos);

  // reloaded bundle gives bit-identical predictions
  REQUIRE(run("predict --fit " + wd.file("f_exp") + " --newdata " +
                  wd.file("nd.csv") +
                  " --times 0 --extrapolate --edist 5 --grid 6 --out " +
                  wd.file("pred2.csv"),
              wd.file("pred2.log")) == 0);
  REQUIRE(slurp(wd.file("pred2.csv")) == pred);
}

TEST_CASE("usage and data errors exit with code 2") {
  Workdir wd;
  REQUIRE(run("fit --data nowhere.csv --formula \"surv(time, status) ~ x\" "
              "--out " + wd.file("x"),
              wd.file("e1.log")) == 2);
  write_design(wd.file("design.json"));
  REQUIRE(run("simulate --design " + wd.file("design.json") + " --seed 1 --out " +
                  wd.file("sim.csv"),
              wd.file("s.log")) == 0);
  // malformed formula
  REQUIRE(run("fit --data " + wd.file("sim.csv") +
                  " --formula \"surv(time status) ~ trt\" --out " + wd.file("x"),
              wd.file("e2.log")) == 2);
  // missing column
  REQUIRE(run("fit --data " + wd.file("sim.csv") +
                  " --formula \"surv(time, status) ~ nope\" --out " + wd.file("x"),
              wd.file("e3.log")) == 2);
  // no partial bundle was left behind
  REQUIRE(!std::filesystem::exists(wd.file("x")));
  REQUIRE(!std::filesystem::exists(wd.file("x.tmp")));
}

TEST_CASE("prior-only runs sample from the prior") {
  Workdir wd;
  write_design(wd.file("design.json"));
  REQUIRE(run("simulate --design " + wd.file("design.json") + " --seed 2 --out " +
                  wd.file("sim.csv"),
              wd.file("s.log")) == 0);
  REQUIRE(run("fit --data " + wd.file("sim.csv") +
                  " --formula \"surv(time, status) ~ trt\" --basehaz exp "
                  "--prior-only --chains 2 --iters 400 --warmup 300 --seed 9 "
                  "--out " + wd.file("f_prior"),
              wd.file("fp.log")) == 0);
  // coefficient posterior is the Normal(0, 2.5) prior: wide and centered
  const std::string draws = slurp(wd.file("f_prior") + "/draws.csv");
  REQUIRE(!draws.empty());
}

