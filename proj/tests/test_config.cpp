#include "dmmd/config.hpp"
#include "dmmd/csv.hpp"
#include "dmmd/error.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

using namespace dmmd;

TEST_CASE("defaults validate and snapshot every key") {
  const RunConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  const auto snap = to_json(cfg);
  CHECK(snap.size() == config_keys().size());
  for (const auto& k : config_keys()) CHECK(snap.contains(k.name));
  CHECK(snap["seed"].is_null());
  CHECK(snap["train.iterations"] == 20000);
  CHECK(snap["model.kind"] == "bandwidth");
}

TEST_CASE("key names are unique and covered by help") {
  std::set<std::string> seen;
  const std::string help = config_help();
  for (const auto& k : config_keys()) {
    CHECK(seen.insert(k.name).second);
    CHECK(help.find(k.name) != std::string::npos);
  }
  for (const char* prefix : {"dataset.", "schedule.", "train.", "model.", "flow.", "eval."})
    CHECK(help.find(prefix) != std::string::npos);
}

TEST_CASE("nested and dotted forms agree") {
  RunConfig a, b;
  apply_json(a, nlohmann::json::parse(R"({"train": {"iterations": 5, "learning_rate": 0.01},
                                          "model": {"kind": "kale", "hidden": [3, 4]}, "seed": 9})"));
  apply_json(b, nlohmann::json::parse(R"({"train.iterations": 5, "train.learning_rate": 0.01,
                                          "model.kind": "kale", "model.hidden": [3, 4], "seed": 9})"));
  CHECK(to_json(a) == to_json(b));
  CHECK(a.train.iterations == 5);
  CHECK(a.model.kind == ModelKind::Kale);
  CHECK(a.model.hidden == std::vector<int>{3, 4});
  CHECK(a.seed == 9u);
}

TEST_CASE("snapshot round-trips through apply_json") {
  RunConfig a;
  apply_override(a, "flow.eta=0.25");
  apply_override(a, "dataset.family=ring");
  apply_override(a, "train.discrete_t=true");
  apply_override(a, "seed=3");
  RunConfig b;
  apply_json(b, to_json(a));
  CHECK(to_json(b) == to_json(a));
  CHECK(b.flow.eta == 0.25);
  CHECK(b.dataset.family == DatasetFamily::Ring);
  CHECK(b.train.discrete_t);
  apply_override(b, "seed=null");
  CHECK_FALSE(b.seed.has_value());
}

TEST_CASE("bad keys, types and values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_override(cfg, "train.iterationz=4"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.iterations=4.5"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "train.iterations"), ConfigError);
  CHECK_THROWS_AS(apply_override(cfg, "model.kind=transformer"), ConfigError);
  CHECK_THROWS_AS(apply_json(cfg, nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  apply_override(cfg, "eval.sigma=-1");
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("particle CSV round-trips bit-exactly") {
  std::mt19937_64 gen(4);
  std::normal_distribution<double> n(0.0, 1e3);
  ParticleSet x(17, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(gen);
  x(0, 0) = std::numeric_limits<double>::denorm_min();
  x(1, 1) = -0.0;
  std::stringstream ss;
  write_particles(ss, x);
  const ParticleSet y = read_particles(ss);
  REQUIRE(y.rows() == x.rows());
  REQUIRE(y.cols() == x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
  CHECK(std::signbit(y(1, 1)));
}

TEST_CASE("particle CSV parse errors") {
  auto parse = [](const std::string& s) {
    std::istringstream is(s);
    return read_particles(is);
  };
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(parse("id,dim_0\n0,1\n"), FormatError);
  CHECK_THROWS_AS(parse("particle_id,dim_1\n0,1\n"), FormatError);
  CHECK_THROWS_AS(parse("particle_id,dim_0\n0,abc\n"), FormatError);
  CHECK_THROWS_AS(parse("particle_id,dim_0,dim_1\n0,1\n"), FormatError);
  const ParticleSet ok = parse("particle_id,dim_0\r\n0,1.5\r\n\r\n1,-2\r\n");
  CHECK(ok.rows() == 2);
  CHECK(ok(1, 0) == -2.0);
}

TEST_CASE("metric and table headers") {
  std::ostringstream m;
  write_metrics(m, {{"r", "eval_mmd", 0.5, 0.25}});
  CHECK(m.str() == "run_id,metric,value,stderr\nr,eval_mmd,0.5,0.25\n");
  std::ostringstream b;
  write_bandwidth_table(b, {{1.0, 3.0, 1.0, 1}});
  CHECK(b.str() == "alpha_star,mu_norm,sigma,d\n1,3,1,1\n");
  MeanFlowResult r;
  r.mu_norm = {5.0, 4.0};
  r.alpha = {2.0};
  std::ostringstream f;
  write_mean_flow(f, r, MeanFlowMode::Fixed);
  CHECK(f.str() == "step,mu_norm,alpha_t,mode\n0,5,,fixed\n1,4,2,fixed\n");
}
