#include "commands.hpp"

#include "dmmd/checkpoint.hpp"
#include "dmmd/csv.hpp"
#include "dmmd/data.hpp"
#include "dmmd/error.hpp"
#include "dmmd/gaussian.hpp"
#include "dmmd/sampling.hpp"
#include "dmmd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>

namespace dmmd::cli {

namespace {

using nlohmann::json;

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
public:
  explicit Manifest(const Invocation& inv) {
    doc_["command"] = inv.command;
    doc_["argv"] = inv.argv;
    doc_["threads"] = inv.threads;
    doc_["started"] = utc_now();
    doc_["outputs"] = json::array();
  }
  json& operator[](const std::string& key) { return doc_[key]; }
  void output(const std::string& path) { doc_["outputs"].push_back(path); }
  void checkpoint(const std::string& path) {
    doc_["checkpoint"] = {{"path", path}, {"fnv1a64", hex64(fnv1a_file(path))}};
  }
  /// Written next to the primary output as <out>.manifest.json.
  void write(const std::string& primary) {
    doc_["finished"] = utc_now();
    const std::string path = primary + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << doc_.dump(2) << '\n';
  }

private:
  json doc_;
};

void write_csv_or_stdout(const std::string& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  fn(out);
}

Model load_model(const std::string& path) { return from_checkpoint(load_checkpoint(path)); }

ParticleSet clean_batch(const Dataset& data, const FlowConfig& flow, Rng& rng) {
  const Eigen::Index n = std::min<Eigen::Index>(flow.clean_batch, data.train.rows());
  return subsample(data.train, n, rng);
}

std::vector<double> table_times(const FlowConfig& flow) {
  std::vector<double> times = flow.level_times();
  for (double t : flow.denoise_times())
    if (std::find(times.begin(), times.end(), t) == times.end()) times.push_back(t);
  return times;
}

ParticleSet draw_samples(const Model& model, const RunConfig& cfg, const Dataset& data,
                         Sampler sampler, Rng& rng) {
  const FlowConfig& flow = cfg.flow;
  switch (sampler) {
  case Sampler::Exact: {
    if (kind_of(model) == ModelKind::Kale)
      throw UnsupportedOperation("sample needs a feature or bandwidth checkpoint; use sample-kale");
    const Discriminator disc = as_discriminator(model);
    const ParticleSet clean = clean_batch(data, flow, rng);
    const ParticleSet z = dmmd_sample(disc, clean, flow, rng);
    return denoise(z, disc, clean, flow.denoise_eta, flow.denoise_steps, flow.denoise_t_hi,
                   flow.denoise_t_lo);
  }
  case Sampler::Approx: {
    const auto* f = std::get_if<FeatureModel>(&model);
    if (!f) throw UnsupportedOperation("sample-approx needs a feature checkpoint");
    const MeanFeatureTable table =
        precompute_mean_features(*f, data.train, cfg.make_schedule(), table_times(flow), rng);
    const ParticleSet z = admmd_sample(*f, table, flow, rng);
    return denoise_approx(z, *f, table, flow.denoise_eta, flow.denoise_steps, flow.denoise_t_hi,
                          flow.denoise_t_lo);
  }
  case Sampler::Kale: {
    const auto* k = std::get_if<KaleModel>(&model);
    if (!k) throw UnsupportedOperation("sample-kale needs a KALE checkpoint");
    return kale_sample(*k, flow, rng);
  }
  }
  throw UnsupportedOperation("unknown sampler");
}

long sampler_nfe(const FlowConfig& flow, Sampler sampler) {
  return sampler == Sampler::Kale ? static_cast<long>(flow.levels + 1) * flow.steps_per_level
                                  : flow.nfe();
}

} // namespace

RunConfig resolve_config(const ConfigOptions& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig{} : load_config(opts.config_path);
  for (const auto& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed) cfg.seed = opts.seed;
  cfg.validate();
  return cfg;
}

std::uint64_t resolve_seed(const RunConfig& cfg) {
  if (cfg.seed) return *cfg.seed;
  if (const char* env = std::getenv("MMDFLOW_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ConfigError("MMDFLOW_SEED must be an unsigned integer");
    return v;
  }
  return 0;
}

void run_train(const Invocation& inv, const TrainOptions& opts) {
  RunConfig cfg = resolve_config(opts.config);
  const std::uint64_t seed = resolve_seed(cfg);
  cfg.seed = seed;
  const bool kale = cfg.model.kind == ModelKind::Kale;
  if (kale) cfg.train.objective = Objective::Kale;
  if (cfg.train.objective == Objective::Kale && !kale)
    throw ConfigError("train.objective=kale needs model.kind=kale");

  const Dataset data = sample_dataset(cfg.dataset);
  Rng rng(seed);
  Model model = make_model(cfg.model, static_cast<int>(data.train.cols()), rng);
  TrainCallback progress;
  if (opts.progress_every > 0) {
    progress = [&](const TrainLogRow& row) {
      if ((row.iter + 1) % opts.progress_every == 0)
        std::cerr << "iter " << row.iter + 1 << " loss " << row.mean_loss << " divergence "
                  << row.mean_divergence << " grad_penalty " << row.mean_grad_penalty << '\n';
    };
  }
  const TrainResult result =
      train_discriminator(data.train, std::move(model), cfg.make_schedule(), cfg.train, rng, progress);
  if (result.clamped) std::cerr << "warning: KALE exponent was clamped during training\n";

  Checkpoint ckpt = to_checkpoint(result.model);
  ckpt.meta["config"] = to_json(cfg);
  ckpt.meta["seed"] = seed;
  ckpt.meta["clamped"] = result.clamped;
  save_checkpoint(opts.out, ckpt);
  const std::string log = opts.log.empty() ? opts.out + ".train_log.csv" : opts.log;
  write_train_log(log, result.log);

  Manifest manifest(inv);
  manifest["config"] = to_json(cfg);
  manifest["seed"] = seed;
  manifest["iterations"] = cfg.train.iterations;
  manifest.checkpoint(opts.out);
  manifest.output(opts.out);
  manifest.output(log);
  manifest.write(opts.out);
}

void run_sample(const Invocation& inv, const SampleOptions& opts, Sampler sampler) {
  ConfigOptions co = opts.config;
  if (opts.n) co.overrides.push_back("flow.particles=" + std::to_string(*opts.n));
  if (opts.denoise_steps) co.overrides.push_back("flow.denoise_steps=" + std::to_string(*opts.denoise_steps));
  if (opts.denoise_lr) co.overrides.push_back("flow.denoise_eta=" + format_double(*opts.denoise_lr));
  RunConfig cfg = resolve_config(co);
  const std::uint64_t seed = resolve_seed(cfg);
  cfg.seed = seed;

  const Model model = load_model(opts.ckpt);
  const Dataset data = sample_dataset(cfg.dataset);
  Rng rng(seed);
  const ParticleSet samples = draw_samples(model, cfg, data, sampler, rng);
  write_particles(opts.out, samples);

  Manifest manifest(inv);
  manifest["config"] = to_json(cfg);
  manifest["seed"] = seed;
  manifest["nfe"] = sampler_nfe(cfg.flow, sampler);
  manifest.checkpoint(opts.ckpt);
  manifest.output(opts.out);
  manifest.write(opts.out);
}

void run_eval(const Invocation& inv, const EvalOptions& opts) {
  const ParticleSet samples = read_particles(opts.samples);
  const ParticleSet reference = read_particles(opts.reference);
  if (samples.cols() != reference.cols()) throw ShapeError("sample and reference dimensions differ");
  Rng rng(opts.seed);
  const MetricValue m = eval_mmd(samples, reference, opts.sigma, rng, opts.bootstrap);
  const std::vector<MetricRow> rows{{opts.run_id, "eval_mmd", m.value, m.std_error}};
  write_csv_or_stdout(opts.out, [&](std::ostream& out) { write_metrics(out, rows); });
  if (!opts.out.empty()) {
    Manifest manifest(inv);
    manifest["seed"] = opts.seed;
    manifest["sigma"] = opts.sigma;
    manifest["bootstrap"] = opts.bootstrap;
    manifest["inputs"] = {opts.samples, opts.reference};
    manifest.output(opts.out);
    manifest.write(opts.out);
  }
}

void run_gaussian_analyze(const Invocation& inv, const GaussianAnalyzeOptions& opts) {
  if (opts.grid < 1) throw ConfigError("--grid must be >= 1");
  if (opts.mu_min < 0.0 || opts.mu_max < opts.mu_min)
    throw ConfigError("need 0 <= --mu-min <= --mu-max");
  std::vector<BandwidthRow> rows;
  for (int i = 0; i < opts.grid; ++i) {
    const double mu =
        opts.grid == 1 ? opts.mu_min : opts.mu_min + (opts.mu_max - opts.mu_min) * i / (opts.grid - 1);
    rows.push_back({optimal_bandwidth(mu, opts.sigma, opts.d), mu, opts.sigma, opts.d});
  }
  write_csv_or_stdout(opts.out, [&](std::ostream& out) { write_bandwidth_table(out, rows); });
  if (!opts.out.empty()) {
    Manifest manifest(inv);
    manifest["parameters"] = {{"d", opts.d}, {"sigma", opts.sigma}, {"mu_min", opts.mu_min},
                              {"mu_max", opts.mu_max}, {"grid", opts.grid}};
    manifest.output(opts.out);
    manifest.write(opts.out);
  }
}

void run_gaussian_flow(const Invocation& inv, const GaussianFlowOptions& opts) {
  if (opts.d < 1) throw ConfigError("--d must be >= 1");
  const MeanFlowMode mode = mean_flow_mode_from_string(opts.mode);
  Vector mu = Vector::Zero(opts.d);
  mu[0] = opts.mu_init;
  const MeanFlowResult r =
      simulate_mean_flow(mu, opts.sigma, opts.d, opts.eta, opts.steps, mode, opts.alpha);
  write_csv_or_stdout(opts.out, [&](std::ostream& out) { write_mean_flow(out, r, mode); });
  if (r.diverged) std::cerr << "warning: mean flow diverged\n";
  if (!opts.out.empty()) {
    Manifest manifest(inv);
    manifest["parameters"] = {{"d", opts.d},         {"sigma", opts.sigma}, {"mu_init", opts.mu_init},
                              {"eta", opts.eta},     {"steps", opts.steps}, {"mode", opts.mode},
                              {"alpha", opts.alpha}};
    manifest["diverged"] = r.diverged;
    manifest.output(opts.out);
    manifest.write(opts.out);
  }
}

void run_ablate(const Invocation& inv, const AblateOptions& opts) {
  RunConfig cfg = resolve_config(opts.config);
  const std::uint64_t seed = resolve_seed(cfg);
  cfg.seed = seed;
  Sampler sampler;
  if (opts.sampler == "exact") sampler = Sampler::Exact;
  else if (opts.sampler == "approx") sampler = Sampler::Approx;
  else if (opts.sampler == "kale") sampler = Sampler::Kale;
  else throw ConfigError("--sampler must be exact, approx or kale");

  std::ifstream in(opts.grid);
  if (!in) throw ConfigError("cannot open grid file '" + opts.grid + "'");
  const json grid = json::parse(in, nullptr, false);
  if (grid.is_discarded() || !grid.is_object()) throw ConfigError("grid file must be a JSON object");
  for (const auto& [k, v] : grid.items())
    if (k != "eta" && k != "levels" && k != "steps_per_level")
      throw ConfigError("grid keys are eta, levels and steps_per_level; got '" + k + "'");
  auto axis = [&](const char* key, const json& fallback) {
    if (!grid.contains(key)) return json::array({fallback});
    if (!grid[key].is_array() || grid[key].empty())
      throw ConfigError(std::string("grid.") + key + " must be a non-empty array");
    return grid[key];
  };
  const json etas = axis("eta", cfg.flow.eta);
  const json levels = axis("levels", cfg.flow.levels);
  const json steps = axis("steps_per_level", cfg.flow.steps_per_level);

  const Model model = load_model(opts.ckpt);
  const Dataset data = sample_dataset(cfg.dataset);
  std::vector<MetricRow> rows;
  json runs = json::array();
  for (const auto& eta : etas) {
    for (const auto& level : levels) {
      for (const auto& step : steps) {
        RunConfig run = cfg;
        apply_json(run, {{"flow.eta", eta}, {"flow.levels", level}, {"flow.steps_per_level", step}});
        run.validate();
        const std::string id = "eta=" + format_double(run.flow.eta) +
                               ";T=" + std::to_string(run.flow.levels) +
                               ";Ns=" + std::to_string(run.flow.steps_per_level);
        Rng rng(seed);
        const ParticleSet samples = draw_samples(model, run, data, sampler, rng);
        Rng eval_rng(seed);
        const MetricValue m = eval_mmd(samples, data.eval, run.eval.sigma, eval_rng, run.eval.bootstrap);
        rows.push_back({id, "eval_mmd", m.value, m.std_error});
        rows.push_back({id, "nfe", static_cast<double>(sampler_nfe(run.flow, sampler)), 0.0});
        runs.push_back({{"run_id", id}, {"eta", run.flow.eta}, {"levels", run.flow.levels},
                        {"steps_per_level", run.flow.steps_per_level}});
        std::cerr << id << " eval_mmd " << m.value << " +- " << m.std_error << '\n';
      }
    }
  }
  write_metrics(opts.out, rows);

  Manifest manifest(inv);
  manifest["config"] = to_json(cfg);
  manifest["seed"] = seed;
  manifest["grid"] = grid;
  manifest["runs"] = runs;
  manifest["sampler"] = opts.sampler;
  manifest.checkpoint(opts.ckpt);
  manifest.output(opts.out);
  manifest.write(opts.out);
}

} // namespace dmmd::cli
