#include "dmmd/config.hpp"

#include "dmmd/error.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace dmmd {

namespace {

using nlohmann::json;

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, const json&)> set;
  std::function<json(const RunConfig&)> get;
};

template <class T> T convert(const json& v, const std::string& name) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + name + "' has the wrong type: " + v.dump());
  }
}

// Binds a key to a field reached through `field(cfg)`.
template <class T, class Field> Entry plain(std::string name, std::string help, Field field) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [field, name](RunConfig& c, const json& v) { field(c) = convert<T>(v, name); };
  e.get = [field](const RunConfig& c) { return json(field(const_cast<RunConfig&>(c))); };
  return e;
}

// Enum-valued key stored via to_string / from_string.
template <class E, class Field, class Parse>
Entry named(std::string name, std::string help, Field field, Parse parse) {
  Entry e{{name, std::move(help)}, {}, {}};
  e.set = [field, parse, name](RunConfig& c, const json& v) {
    field(c) = parse(convert<std::string>(v, name));
  };
  e.get = [field](const RunConfig& c) { return json(to_string(field(const_cast<RunConfig&>(c)))); };
  return e;
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back(named<DatasetFamily>("dataset.family", "checkerboard | two_gaussians | ring",
                                     FIELD(dataset.family), dataset_family_from_string));
    t.push_back(plain<Eigen::Index>("dataset.count", "total samples before the split",
                                    FIELD(dataset.count)));
    t.push_back(plain<std::uint64_t>("dataset.seed", "dataset generator seed", FIELD(dataset.seed)));
    t.push_back(plain<double>("dataset.eval_fraction", "held-out share", FIELD(dataset.eval_fraction)));
    t.push_back(plain<double>("dataset.separation", "two_gaussians mode offset",
                              FIELD(dataset.separation)));
    t.push_back(plain<double>("dataset.scale", "two_gaussians std / ring radial noise",
                              FIELD(dataset.scale)));
    t.push_back(plain<double>("dataset.radius", "ring radius", FIELD(dataset.radius)));

    t.push_back(plain<int>("schedule.levels", "number of tabulated noise levels L",
                           FIELD(schedule.levels)));
    t.push_back(plain<double>("schedule.beta_start", "first beta of the linear ramp",
                              FIELD(schedule.beta_start)));
    t.push_back(plain<double>("schedule.beta_end", "last beta of the linear ramp",
                              FIELD(schedule.beta_end)));

    t.push_back(plain<int>("train.iterations", "N_iter", FIELD(train.iterations)));
    t.push_back(plain<int>("train.batch_size", "B", FIELD(train.batch_size)));
    t.push_back(plain<int>("train.noise_levels", "N_noise per batch", FIELD(train.noise_levels)));
    t.push_back(plain<double>("train.lambda_grad", "gradient penalty weight", FIELD(train.lambda_grad)));
    t.push_back(plain<double>("train.lambda_l2", "feature l2 penalty weight", FIELD(train.lambda_l2)));
    t.push_back(plain<double>("train.learning_rate", "Adam step size", FIELD(train.adam.learning_rate)));
    t.push_back(plain<double>("train.beta1", "Adam beta1", FIELD(train.adam.beta1)));
    t.push_back(plain<double>("train.beta2", "Adam beta2", FIELD(train.adam.beta2)));
    t.push_back(plain<double>("train.epsilon", "Adam epsilon", FIELD(train.adam.epsilon)));
    t.push_back(named<Objective>("train.objective", "mmd | kale", FIELD(train.objective),
                                 objective_from_string));
    t.push_back(plain<double>("train.kale_lambda", "KALE regularization lambda",
                              FIELD(train.kale_lambda)));
    t.push_back(plain<bool>("train.discrete_t", "snap sampled t to the schedule grid",
                            FIELD(train.discrete_t)));

    t.push_back(named<ModelKind>("model.kind", "features | bandwidth | kale", FIELD(model.kind),
                                 model_kind_from_string));
    t.push_back(plain<std::vector<int>>("model.hidden", "feature net hidden widths",
                                        FIELD(model.hidden)));
    t.push_back(plain<int>("model.feature_dim", "feature dimension K", FIELD(model.feature_dim)));
    t.push_back(named<Activation>("model.activation", "identity | relu | elu | gelu",
                                  FIELD(model.activation), activation_from_string));
    t.push_back(plain<int>("model.embed_dim", "feature net time embedding size", FIELD(model.embed_dim)));
    t.push_back(plain<std::string>("model.kernel",
                                   "linear | rbf | rational_quadratic | normalized_gaussian",
                                   FIELD(model.kernel)));
    t.push_back(plain<double>("model.kernel_param", "rbf sigma / rq alpha / gaussian alpha",
                              FIELD(model.kernel_param)));
    t.push_back(plain<std::vector<int>>("model.bandwidth_widths", "sigma(t) net widths",
                                        FIELD(model.bandwidth_widths)));
    t.push_back(plain<int>("model.bandwidth_embed_dim", "sigma(t) net time embedding size",
                           FIELD(model.bandwidth_embed_dim)));
    t.push_back(plain<double>("model.sigma_min", "lower bound of sigma(t)", FIELD(model.sigma_min)));
    t.push_back(plain<double>("model.bandwidth_bias_init", "initial output bias of the sigma(t) net",
                              FIELD(model.bandwidth_bias_init)));
    t.push_back(plain<double>("model.bandwidth_output_scale",
                              "factor on the initial output-layer weights of the sigma(t) net",
                              FIELD(model.bandwidth_output_scale)));
    t.push_back(plain<int>("model.head_hidden", "KALE head hidden width", FIELD(model.head_hidden)));

    t.push_back(plain<int>("flow.levels", "T (levels visited: T + 1)", FIELD(flow.levels)));
    t.push_back(plain<int>("flow.steps_per_level", "N_s", FIELD(flow.steps_per_level)));
    t.push_back(plain<double>("flow.eta", "flow step size", FIELD(flow.eta)));
    t.push_back(plain<int>("flow.particles", "N_p", FIELD(flow.particles)));
    t.push_back(plain<double>("flow.t_min", "lowest flow noise level", FIELD(flow.t_min)));
    t.push_back(plain<double>("flow.t_max", "highest flow noise level", FIELD(flow.t_max)));
    t.push_back(plain<int>("flow.denoise_steps", "extra low-noise steps", FIELD(flow.denoise_steps)));
    t.push_back(plain<double>("flow.denoise_eta", "denoising step size", FIELD(flow.denoise_eta)));
    t.push_back(plain<double>("flow.denoise_t_hi", "first denoising level", FIELD(flow.denoise_t_hi)));
    t.push_back(plain<double>("flow.denoise_t_lo", "last denoising level", FIELD(flow.denoise_t_lo)));
    t.push_back(plain<int>("flow.clean_batch", "N_c clean reference batch", FIELD(flow.clean_batch)));

    t.push_back(plain<double>("eval.sigma", "RBF width of the evaluation MMD", FIELD(eval.sigma)));
    t.push_back(plain<int>("eval.bootstrap", "bootstrap resamples", FIELD(eval.bootstrap)));

    Entry seed{{"seed", "run seed (falls back to MMDFLOW_SEED, then 0)"}, {}, {}};
    seed.set = [](RunConfig& c, const json& v) {
      c.seed = v.is_null() ? std::nullopt : std::optional(convert<std::uint64_t>(v, "seed"));
    };
    seed.get = [](const RunConfig& c) { return c.seed ? json(*c.seed) : json(nullptr); };
    t.push_back(std::move(seed));
    return t;
  }();
  return table;
}

#undef FIELD

const Entry& find_entry(const std::string& name) {
  for (const auto& e : entries())
    if (e.key.name == name) return e;
  throw ConfigError("unknown config key '" + name + "'");
}

void apply_flat(RunConfig& cfg, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    const std::string name = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      apply_flat(cfg, v, name);
    } else {
      find_entry(name).set(cfg, v);
    }
  }
}

} // namespace

void RunConfig::validate() const {
  dataset.validate();
  make_schedule();
  train.validate();
  flow.validate();
  if (!(eval.sigma > 0.0)) throw ConfigError("eval.sigma must be positive");
  if (eval.bootstrap < 2) throw ConfigError("eval.bootstrap must be >= 2");
  if (model.feature_dim < 1 || model.embed_dim < 0 || model.head_hidden < 1)
    throw ConfigError("model dimensions must be positive");
  for (int w : model.hidden)
    if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
  make_base_kernel(model.kernel, model.kernel_param, model.feature_dim);
}

DiffusionSchedule RunConfig::make_schedule() const {
  return DiffusionSchedule(schedule.levels, schedule.beta_start, schedule.beta_end);
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

std::string config_help() {
  const RunConfig defaults;
  std::ostringstream os;
  os << "Config keys (JSON file, nested or dotted; override with --set key=value):\n";
  std::size_t width = 0;
  for (const auto& e : entries()) width = std::max(width, e.key.name.size());
  for (const auto& e : entries()) {
    os << "  " << e.key.name;
    for (std::size_t pad = e.key.name.size(); pad < width + 2; ++pad) os << ' ';
    os << e.key.help << " [" << e.get(defaults).dump() << "]\n";
  }
  return os.str();
}

void apply_json(RunConfig& cfg, const nlohmann::json& doc) { apply_flat(cfg, doc, ""); }

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string name = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  find_entry(name).set(cfg, value);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  RunConfig cfg;
  apply_json(cfg, doc);
  return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& e : entries()) out[e.key.name] = e.get(cfg);
  return out;
}

} // namespace dmmd
