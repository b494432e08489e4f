#pragma once

#include "dmmd/config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dmmd::cli {

struct Invocation {
  std::string command;
  std::vector<std::string> argv;
  int threads = 1;
};

struct ConfigOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

/// Config file, then --set overrides; seed precedence: --seed, config, MMDFLOW_SEED, 0.
RunConfig resolve_config(const ConfigOptions& opts);
std::uint64_t resolve_seed(const RunConfig& cfg);

struct TrainOptions {
  ConfigOptions config;
  std::string out;
  std::string log;
  int progress_every = 0;
};
void run_train(const Invocation& inv, const TrainOptions& opts);

enum class Sampler { Exact, Approx, Kale };

struct SampleOptions {
  ConfigOptions config;
  std::string ckpt;
  std::string out;
  std::optional<int> n;
  std::optional<int> denoise_steps;
  std::optional<double> denoise_lr;
};
void run_sample(const Invocation& inv, const SampleOptions& opts, Sampler sampler);

struct EvalOptions {
  std::string samples;
  std::string reference;
  double sigma = 0.5;
  int bootstrap = 200;
  std::uint64_t seed = 0;
  std::string run_id = "eval";
  std::string out;
};
void run_eval(const Invocation& inv, const EvalOptions& opts);

struct GaussianAnalyzeOptions {
  int d = 1;
  double sigma = 1.0;
  double mu_min = 0.0;
  double mu_max = 4.0;
  int grid = 5;
  std::string out;
};
void run_gaussian_analyze(const Invocation& inv, const GaussianAnalyzeOptions& opts);

struct GaussianFlowOptions {
  int d = 1;
  double sigma = 1.0;
  double mu_init = 5.0;
  double eta = 1.0;
  int steps = 100;
  std::string mode = "adaptive";
  double alpha = 1.0;
  std::string out;
};
void run_gaussian_flow(const Invocation& inv, const GaussianFlowOptions& opts);

struct AblateOptions {
  ConfigOptions config;
  std::string ckpt;
  std::string grid;
  std::string out;
  std::string sampler = "exact";
};
void run_ablate(const Invocation& inv, const AblateOptions& opts);

} // namespace dmmd::cli
