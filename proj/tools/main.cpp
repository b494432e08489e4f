#include "commands.hpp"

#include "dmmd/error.hpp"
#include "dmmd/fpmode.hpp"
#include "dmmd/sampling.hpp"

#include <CLI11.hpp>

#include <iostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace {

using namespace dmmd::cli;

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "override a config key, key=value (repeatable)");
  cmd->add_option("--seed", opts.seed, "run seed (overrides config and MMDFLOW_SEED)");
  cmd->footer(dmmd::config_help());
}

} // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Gram-sized temporaries are reallocated every step; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  dmmd::enable_flush_to_zero();
  CLI::App app{"Diffusion MMD particle flows: training, sampling and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "worker threads for per-particle flows")
      ->check(CLI::PositiveNumber);

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "train a noise-conditional discriminator");
  add_config_options(train_cmd, train.config);
  train_cmd->add_option("--out", train.out, "checkpoint path")->required();
  train_cmd->add_option("--log", train.log, "training log CSV (default <out>.train_log.csv)");
  train_cmd->add_option("--progress", train.progress_every, "report to stderr every N iterations");

  SampleOptions sample;
  auto* sample_cmd = app.add_subcommand("sample", "exact-witness particle flow");
  auto* approx_cmd = app.add_subcommand("sample-approx", "mean-feature approximate flow");
  auto* kale_cmd = app.add_subcommand("sample-kale", "KALE witness flow");
  for (auto* cmd : {sample_cmd, approx_cmd, kale_cmd}) {
    add_config_options(cmd, sample.config);
    cmd->add_option("--ckpt", sample.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", sample.out, "particle CSV")->required();
    cmd->add_option("--n", sample.n, "number of particles");
  }
  for (auto* cmd : {sample_cmd, approx_cmd}) {
    cmd->add_option("--denoise-steps", sample.denoise_steps, "extra low-noise steps");
    cmd->add_option("--denoise-lr", sample.denoise_lr, "denoising step size");
  }

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "RBF-MMD^2 between two particle CSVs");
  eval_cmd->add_option("--samples", eval.samples, "generated particles")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--reference", eval.reference, "reference particles")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--sigma", eval.sigma, "RBF width")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--bootstrap", eval.bootstrap, "bootstrap resamples")->capture_default_str()->check(CLI::Range(2, 1 << 30));
  eval_cmd->add_option("--seed", eval.seed, "bootstrap seed")->capture_default_str();
  eval_cmd->add_option("--run-id", eval.run_id, "run_id column")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "metrics CSV (stdout when omitted)");

  GaussianAnalyzeOptions ga;
  auto* ga_cmd = app.add_subcommand("gaussian-analyze", "optimal bandwidth on a grid of mean offsets");
  ga_cmd->add_option("--d", ga.d, "dimension")->capture_default_str()->check(CLI::PositiveNumber);
  ga_cmd->add_option("--sigma", ga.sigma, "data std")->capture_default_str()->check(CLI::PositiveNumber);
  ga_cmd->add_option("--mu-min", ga.mu_min, "smallest ||mu||")->capture_default_str();
  ga_cmd->add_option("--mu-max", ga.mu_max, "largest ||mu||")->capture_default_str();
  ga_cmd->add_option("--grid", ga.grid, "grid points")->capture_default_str();
  ga_cmd->add_option("--out", ga.out, "CSV path (stdout when omitted)");

  GaussianFlowOptions gf;
  auto* gf_cmd = app.add_subcommand("gaussian-flow", "mean-only MMD flow between Gaussians");
  gf_cmd->add_option("--d", gf.d, "dimension")->capture_default_str()->check(CLI::PositiveNumber);
  gf_cmd->add_option("--sigma", gf.sigma, "data std")->capture_default_str()->check(CLI::PositiveNumber);
  gf_cmd->add_option("--mu-init", gf.mu_init, "initial first coordinate of mu")->capture_default_str();
  gf_cmd->add_option("--eta", gf.eta, "step size")->capture_default_str();
  gf_cmd->add_option("--steps", gf.steps, "number of steps")->capture_default_str()->check(CLI::NonNegativeNumber);
  gf_cmd->add_option("--mode", gf.mode, "adaptive | fixed")->capture_default_str()->check(CLI::IsMember({"adaptive", "fixed"}));
  gf_cmd->add_option("--alpha", gf.alpha, "bandwidth in fixed mode")->capture_default_str()->check(CLI::PositiveNumber);
  gf_cmd->add_option("--out", gf.out, "CSV path (stdout when omitted)");

  AblateOptions ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "sweep flow settings and score each against held-out data");
  add_config_options(ablate_cmd, ablate.config);
  ablate_cmd->add_option("--ckpt", ablate.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--grid", ablate.grid, "JSON with eta / levels / steps_per_level arrays")
      ->required()
      ->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", ablate.out, "metrics CSV")->required();
  ablate_cmd->add_option("--sampler", ablate.sampler, "exact | approx | kale")->capture_default_str()
      ->check(CLI::IsMember({"exact", "approx", "kale"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Invocation inv;
  inv.argv.assign(argv, argv + argc);
  inv.threads = threads;
  try {
    dmmd::set_thread_count(threads);
    if (sample.n && *sample.n < 1) throw dmmd::ConfigError("--n must be >= 1");
    if (train_cmd->parsed()) {
      inv.command = "train";
      run_train(inv, train);
    } else if (sample_cmd->parsed()) {
      inv.command = "sample";
      run_sample(inv, sample, Sampler::Exact);
    } else if (approx_cmd->parsed()) {
      inv.command = "sample-approx";
      run_sample(inv, sample, Sampler::Approx);
    } else if (kale_cmd->parsed()) {
      inv.command = "sample-kale";
      run_sample(inv, sample, Sampler::Kale);
    } else if (eval_cmd->parsed()) {
      inv.command = "eval";
      run_eval(inv, eval);
    } else if (ga_cmd->parsed()) {
      inv.command = "gaussian-analyze";
      run_gaussian_analyze(inv, ga);
    } else if (gf_cmd->parsed()) {
      inv.command = "gaussian-flow";
      run_gaussian_flow(inv, gf);
    } else if (ablate_cmd->parsed()) {
      inv.command = "ablate";
      run_ablate(inv, ablate);
    }
  } catch (const dmmd::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const dmmd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
