#pragma once

#include "dmmd/data.hpp"
#include "dmmd/models.hpp"
#include "dmmd/sampling.hpp"
#include "dmmd/training.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dmmd {

struct ScheduleConfig {
  int levels = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-4;
};

struct EvalConfig {
  double sigma = 0.5;
  int bootstrap = 200;
};

/// Everything a command needs besides its flags.
struct RunConfig {
  DatasetSpec dataset;
  ScheduleConfig schedule;
  TrainConfig train;
  ModelConfig model;
  FlowConfig flow;
  EvalConfig eval;
  std::optional<std::uint64_t> seed;

  void validate() const;
  DiffusionSchedule make_schedule() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every documented key, in listing order.
const std::vector<ConfigKey>& config_keys();
/// Key listing for --help output.
std::string config_help();

/// Accepts nested objects ({"train": {"iterations": 5}}) and dotted keys
/// ({"train.iterations": 5}). Unknown keys raise ConfigError.
void apply_json(RunConfig& cfg, const nlohmann::json& doc);
/// "key=value" where value is parsed as JSON, falling back to a plain string.
void apply_override(RunConfig& cfg, const std::string& assignment);
RunConfig load_config(const std::string& path);
/// Flat {key: value} snapshot of every documented key (seed is null when unset).
nlohmann::json to_json(const RunConfig& cfg);

} // namespace dmmd
