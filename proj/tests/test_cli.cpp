#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = NPLCM_CONFIG_DIR;

struct Result {
  int code = -1;
  std::string out;
};

Result nplcm(const std::string& args) {
  const std::string cmd = "\""s + NPLCM_CLI + "\" " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines_with(const std::string& text, const std::string& needle) {
  int n = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) n += line.find(needle) != std::string::npos;
  return n;
}

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("nplcm_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

}  // namespace

TEST_CASE("usage and validation errors exit with 2") {
  Scratch s("usage");
  CHECK(nplcm("").code == 2);
  CHECK(nplcm("frobnicate").code == 2);
  const auto r = nplcm("fit --data " + s / "missing.json" + " --model " + (kConfigs / "noreg_model.json").string() +
                       " --mcmc " + (kConfigs / "mcmc_quick.json").string() + " --out " + s / "run");
  CHECK(r.code == 2);
  CHECK(r.out.find("missing.json") != std::string::npos);
  CHECK(nplcm("check --fit " + s / "run" + " --stat bogus").code == 2);
}

TEST_CASE("simulate, fit, summarize, check and predict") {
  Scratch s("roundtrip");
  const std::string data = s / "data.json", run = s / "run";
  auto r = nplcm("simulate --recipe " + (kConfigs / "noreg_recipe.json").string() + " --out " + data);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(s / "data.truth.json"));

  r = nplcm("fit --data " + data + " --model " + (kConfigs / "noreg_model.json").string() + " --mcmc " +
            (kConfigs / "mcmc_quick.json").string() + " --out " + run);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(fs::path(run) / "manifest.json"));

  r = nplcm("summarize --fit " + run);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("fitted type:  no_reg") != std::string::npos);
  CHECK(r.out.find("post.mean") != std::string::npos);

  r = nplcm("check --fit " + run + " --stat patterns --npat 5");
  REQUIRE(r.code == 0);
  CHECK(count_lines_with(r.out, "rest") == 2);
  CHECK(count_lines_with(r.out, "control  ") == 6);
  CHECK(count_lines_with(r.out, "case     ") == 6);

  r = nplcm("check --fit " + run + " --stat slord");
  CHECK(r.code == 0);

  r = nplcm("predict --fit " + run + " --out " + s / "pred.csv");
  REQUIRE(r.code == 0);
  std::ifstream pred(s / "pred.csv");
  std::string header;
  std::getline(pred, header);
  CHECK(header == "subject,A,B,C,D,E,F");
}

TEST_CASE("predict needs individual class draws") {
  Scratch s("nopred");
  const std::string data = s / "data.json";
  REQUIRE(nplcm("simulate --recipe " + (kConfigs / "noreg_recipe.json").string() + " --out " + data).code == 0);
  std::ofstream(s / "mcmc.json") << R"({"n_chains": 1, "n_iter": 40, "n_burnin": 20, "seed": 3})";
  REQUIRE(nplcm("fit --data " + data + " --model " + (kConfigs / "noreg_model.json").string() + " --mcmc " +
                s / "mcmc.json" + " --out " + s / "run")
              .code == 0);
  const auto r = nplcm("predict --fit " + s / "run");
  CHECK(r.code == 2);
}

TEST_CASE("simulation output is determined by the seed") {
  Scratch s("seed");
  const std::string recipe = (kConfigs / "noreg_recipe.json").string();
  REQUIRE(nplcm("simulate --recipe " + recipe + " --seed 9 --out " + s / "a.json").code == 0);
  REQUIRE(nplcm("simulate --recipe " + recipe + " --seed 9 --out " + s / "b.json").code == 0);
  REQUIRE(nplcm("simulate --recipe " + recipe + " --seed 10 --out " + s / "c.json").code == 0);
  CHECK(slurp(s / "a.json") == slurp(s / "b.json"));
  CHECK(slurp(s / "a.json") != slurp(s / "c.json"));
}

TEST_CASE("the output root comes from the environment") {
  Scratch s("env");
  const std::string recipe = (kConfigs / "noreg_recipe.json").string();
  ::unsetenv("NPLCM_OUT_ROOT");
  CHECK(nplcm("simulate --recipe " + recipe).code == 2);
  ::setenv("NPLCM_OUT_ROOT", s.dir.c_str(), 1);
  CHECK(nplcm("simulate --recipe " + recipe).code == 0);
  ::unsetenv("NPLCM_OUT_ROOT");
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(s.dir)) files += e.is_regular_file();
  CHECK(files == 2);  // dataset and truth
}
