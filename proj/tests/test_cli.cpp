#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

const fs::path kWorkDir = fs::temp_directory_path() / "photonkit_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PHOTONKIT_CLI_PATH) + " " + args +
                          " > /dev/null 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string p(const char* name) { return (kWorkDir / name).string(); }

}  // namespace

TEST_CASE("cli end-to-end: simulate, correlate, fit; reruns byte-identical") {
  fs::create_directories(kWorkDir);

  const std::string sim_args =
      "simulate --mode cw --duration 0.4 --k-exc 4e5 --k-rad 8.9e8 "
      "--k-isc 4e7 --k-back 5e7 --dark-rate 1000 --seed 11 --out " + p("s.ett1");
  REQUIRE(run_cli(sim_args) == 0);
  CHECK(fs::exists(p("s.ett1")));
  CHECK(fs::exists(p("s.ett1") + ".json"));

  // byte-identical rerun
  const std::string first = slurp(p("s.ett1"));
  REQUIRE(run_cli(sim_args) == 0);
  CHECK(first == slurp(p("s.ett1")));
  CHECK(!first.empty());

  REQUIRE(run_cli("correlate --in " + p("s.ett1") +
                  " --bin-width 200 --max-lag 40000 --out " + p("g2.csv")) == 0);
  const std::string hist_first = slurp(p("g2.csv"));
  REQUIRE(run_cli("correlate --in " + p("s.ett1") +
                  " --bin-width 200 --max-lag 40000 --out " + p("g2.csv")) == 0);
  CHECK(hist_first == slurp(p("g2.csv")));

  REQUIRE(run_cli("fit-g2 --in " + p("g2.csv") + " --mc-samples 100 --seed 7 --out " +
                  p("fit.json")) == 0);
  const std::string fit_first = slurp(p("fit.json"));
  REQUIRE(run_cli("fit-g2 --in " + p("g2.csv") + " --mc-samples 100 --seed 7 --out " +
                  p("fit.json")) == 0);
  CHECK(fit_first == slurp(p("fit.json")));
  CHECK(fit_first.find("\"model_id\"") != std::string::npos);
  CHECK(fit_first.find("g2_zero") != std::string::npos);
}

TEST_CASE("cli pulsed pipeline with trpl") {
  fs::create_directories(kWorkDir);
  REQUIRE(run_cli("simulate --mode pulsed --pulses 200000 --k-rad 8.9e8 "
                  "--k-isc 0 --k-back 1e7 --excite-prob 0.9 --dark-rate 0 "
                  "--seed 3 --out " + p("pulsed.ett1")) == 0);
  REQUIRE(run_cli("trpl --in " + p("pulsed.ett1") + " --bin-width 50 --out " +
                  p("decay.csv")) == 0);
  REQUIRE(run_cli("fit-lifetime --in " + p("decay.csv") +
                  " --mc-samples 100 --out " + p("tau.json")) == 0);
  const std::string fit = slurp(p("tau.json"));
  CHECK(fit.find("\"tau\"") != std::string::npos);
}

TEST_CASE("cli thinfilm curve and invert") {
  fs::create_directories(kWorkDir);
  REQUIRE(run_cli("thinfilm curve --t-min 0 --t-max 120 --points 1201 --out " +
                  p("curve.csv")) == 0);
  REQUIRE(run_cli("thinfilm invert --curve " + p("curve.csv") + " --opl 20 --out " +
                  p("inv.json")) == 0);
  const std::string inv = slurp(p("inv.json"));
  CHECK(inv.find("\"ambiguous\": false") != std::string::npos);
}

TEST_CASE("cli exit codes") {
  fs::create_directories(kWorkDir);
  // missing file -> io error 4
  CHECK(run_cli("correlate --in " + p("nope.ett1") + " --out " + p("x.csv")) == 4);
  // validation error 2: pulse duty >= 1
  CHECK(run_cli("simulate --mode pulsed --pulses 10 --rep-rate 1e15 "
                "--pulse-length 1e-9 --out " + p("bad.ett1")) == 2);
  // unknown flag -> CLI parse failure
  CHECK(run_cli("correlate --bogus") != 0);
}
