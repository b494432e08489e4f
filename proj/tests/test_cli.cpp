#include "dmmd/config.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

// Runs the CLI with stderr discarded; returns the exit status and stdout.
Result run(const std::string& args) {
  const std::string cmd = std::string(DMMD_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dmmd_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kSmallConfig = R"({
  "dataset": {"count": 600},
  "train": {"iterations": 8, "batch_size": 32, "noise_levels": 3},
  "model": {"kind": "features", "hidden": [8], "feature_dim": 4, "embed_dim": 4},
  "flow": {"levels": 4, "steps_per_level": 2, "particles": 40, "clean_batch": 64},
  "eval": {"bootstrap": 10},
  "seed": 11
})";

} // namespace

TEST_CASE("gaussian-analyze reproduces the bandwidth phase transition") {
  const Result r = run("gaussian-analyze --d 1 --sigma 1 --mu-min 0 --mu-max 4 --grid 5");
  REQUIRE(r.code == 0);
  std::istringstream is(r.out);
  std::string line;
  std::getline(is, line);
  CHECK(line == "alpha_star,mu_norm,sigma,d");
  int rows = 0;
  while (std::getline(is, line)) {
    double alpha = 0, mu = 0, sigma = 0;
    int d = 0;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%d", &alpha, &mu, &sigma, &d) == 4);
    const double m2 = mu * mu;
    if (m2 <= 6.0) CHECK(alpha == 0.0);
    else CHECK(alpha == doctest::Approx(std::sqrt(m2 / 3.0 - 2.0)).epsilon(1e-14));
    ++rows;
  }
  CHECK(rows == 5);
}

TEST_CASE("usage errors exit 1") {
  CHECK(run("").code == 1);
  CHECK(run("frobnicate").code == 1);
  CHECK(run("gaussian-analyze --bogus").code == 1);
  CHECK(run("gaussian-flow --mode sideways").code == 1);
  TempDir dir;
  { std::ofstream(dir / "c.json") << kSmallConfig; }
  REQUIRE(run("train --config " + (dir / "c.json") + " --out " + (dir / "m.ckpt")).code == 0);
  CHECK(run("sample --config " + (dir / "c.json") + " --ckpt " + (dir / "m.ckpt") + " --n 0 --out " +
            (dir / "s.csv"))
            .code == 1);
  CHECK_FALSE(fs::exists(dir / "s.csv"));
  CHECK(run("train --config " + (dir / "c.json") + " --set train.nope=1 --out " + (dir / "x.ckpt")).code == 1);
}

TEST_CASE("help lists every config key on every config-taking command") {
  CHECK(run("--help").code == 0);
  for (const char* cmd : {"train", "sample", "sample-approx", "sample-kale", "ablate"}) {
    const Result r = run(std::string(cmd) + " --help");
    CHECK(r.code == 0);
    for (const auto& k : dmmd::config_keys()) CHECK_MESSAGE(r.out.find(k.name) != std::string::npos, cmd, " ", k.name);
  }
}

TEST_CASE("train then sample twice gives byte-identical CSVs") {
  TempDir dir;
  const std::string cfg = dir / "c.json";
  { std::ofstream(cfg) << kSmallConfig; }
  for (const char* tag : {"1", "2"}) {
    const std::string ckpt = dir / (std::string("m") + tag + ".ckpt");
    REQUIRE(run("--threads 1 train --config " + cfg + " --out " + ckpt).code == 0);
    REQUIRE(run("--threads 1 sample --config " + cfg + " --ckpt " + ckpt + " --n 25 --out " +
                (dir / (std::string("s") + tag + ".csv")))
                .code == 0);
    REQUIRE(run("--threads 1 sample-approx --config " + cfg + " --ckpt " + ckpt + " --out " +
                (dir / (std::string("a") + tag + ".csv")))
                .code == 0);
  }
  CHECK(slurp(dir / "m1.ckpt") == slurp(dir / "m2.ckpt"));
  CHECK(slurp(dir / "s1.csv") == slurp(dir / "s2.csv"));
  CHECK(slurp(dir / "a1.csv") == slurp(dir / "a2.csv"));
  CHECK(slurp(dir / "m1.ckpt.train_log.csv") == slurp(dir / "m2.ckpt.train_log.csv"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "s1.csv.manifest.json"));
  CHECK(manifest["command"] == "sample");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["nfe"] == 5 * 2 + 2);
  CHECK(manifest["config"]["flow.particles"] == 25);
  CHECK(manifest["checkpoint"]["fnv1a64"].get<std::string>().size() == 16);
  CHECK(manifest.contains("started"));
  CHECK(manifest.contains("finished"));

  std::istringstream rows(slurp(dir / "s1.csv"));
  std::string line;
  int n = 0;
  while (std::getline(rows, line)) ++n;
  CHECK(n == 26);
}

TEST_CASE("seed falls back to the environment") {
  TempDir dir;
  const std::string cfg = dir / "c.json";
  std::string text = kSmallConfig;
  text.replace(text.find("\"seed\": 11"), 10, "\"seed\": null");
  { std::ofstream(cfg) << text; }
  REQUIRE(run("train --config " + cfg + " --out " + (dir / "m.ckpt")).code == 0);
  REQUIRE(system(("MMDFLOW_SEED=5 " + std::string(DMMD_CLI_PATH) + " sample --config " + cfg + " --ckpt " +
                  (dir / "m.ckpt") + " --out " + (dir / "e.csv") + " 2>/dev/null")
                     .c_str()) == 0);
  REQUIRE(run("sample --config " + cfg + " --seed 5 --ckpt " + (dir / "m.ckpt") + " --out " + (dir / "f.csv")).code == 0);
  CHECK(slurp(dir / "e.csv") == slurp(dir / "f.csv"));
  CHECK(nlohmann::json::parse(slurp(dir / "e.csv.manifest.json"))["seed"] == 5);
}

TEST_CASE("eval and ablate write metrics tables") {
  TempDir dir;
  const std::string cfg = dir / "c.json";
  { std::ofstream(cfg) << kSmallConfig; }
  REQUIRE(run("train --config " + cfg + " --out " + (dir / "m.ckpt")).code == 0);
  REQUIRE(run("sample --config " + cfg + " --ckpt " + (dir / "m.ckpt") + " --out " + (dir / "s.csv")).code == 0);
  const Result e = run("eval --samples " + (dir / "s.csv") + " --reference " + (dir / "s.csv") +
                       " --bootstrap 10 --run-id self");
  REQUIRE(e.code == 0);
  CHECK(e.out.rfind("run_id,metric,value,stderr\nself,eval_mmd,", 0) == 0);

  { std::ofstream(dir / "g.json") << R"({"eta": [0.5, 1.0], "levels": [2]})"; }
  REQUIRE(run("ablate --config " + cfg + " --ckpt " + (dir / "m.ckpt") + " --grid " + (dir / "g.json") +
              " --out " + (dir / "ab.csv"))
              .code == 0);
  const std::string table = slurp(dir / "ab.csv");
  CHECK(table.find("eta=0.5;T=2;Ns=2,eval_mmd,") != std::string::npos);
  CHECK(table.find("eta=1;T=2;Ns=2,nfe,8,") != std::string::npos);
  CHECK(fs::exists(dir / "ab.csv.manifest.json"));
}

TEST_CASE("gaussian-flow writes a monotone adaptive trajectory") {
  const Result r = run("gaussian-flow --d 1 --sigma 1 --mu-init 5 --eta 1 --steps 50 --mode adaptive");
  REQUIRE(r.code == 0);
  std::istringstream is(r.out);
  std::string line;
  std::getline(is, line);
  CHECK(line == "step,mu_norm,alpha_t,mode");
  double prev = 1e300;
  int rows = 0;
  while (std::getline(is, line)) {
    const double mu = std::stod(line.substr(line.find(',') + 1));
    CHECK(mu <= prev);
    prev = mu;
    ++rows;
  }
  CHECK(rows == 51);
}
