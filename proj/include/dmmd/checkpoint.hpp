#pragma once

#include "dmmd/feature_net.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace dmmd {

/// Named networks plus free-form metadata. On disk: one line of compact JSON (the
/// manifest: metadata, network shapes and array table) followed by the raw little-endian
/// float64 parameters of every network in manifest order.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, FeatureNet>> nets;

  const FeatureNet& net(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// 64-bit FNV-1a of a file's bytes.
std::uint64_t fnv1a_file(const std::string& path);
std::string hex64(std::uint64_t value);

} // namespace dmmd
