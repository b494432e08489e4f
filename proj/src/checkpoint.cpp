#include "dmmd/checkpoint.hpp"

#include "dmmd/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dmmd {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "dmmd-checkpoint";
constexpr int kVersion = 1;

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}

json describe(const std::string& name, const FeatureNet& net) {
  json layers = json::array();
  for (const auto& layer : net.layers())
    layers.push_back({{"in", layer.weight.cols()},
                      {"out", layer.weight.rows()},
                      {"activation", to_string(layer.activation)}});
  return {{"name", name},
          {"input_dim", net.input_dim()},
          {"embed_dim", net.embed_dim()},
          {"parameter_count", net.parameter_count()},
          {"layers", layers}};
}

FeatureNet skeleton(const json& desc) {
  std::vector<DenseLayer> layers;
  for (const auto& l : desc.at("layers")) {
    DenseLayer layer;
    layer.weight = Matrix::Zero(l.at("out").get<Eigen::Index>(), l.at("in").get<Eigen::Index>());
    layer.bias = Vector::Zero(l.at("out").get<Eigen::Index>());
    layer.activation = activation_from_string(l.at("activation").get<std::string>());
    layers.push_back(std::move(layer));
  }
  return FeatureNet(desc.at("input_dim").get<int>(), desc.at("embed_dim").get<int>(),
                    std::move(layers));
}

} // namespace

const FeatureNet& Checkpoint::net(const std::string& name) const {
  for (const auto& [n, net] : nets)
    if (n == name) return net;
  throw FormatError("checkpoint has no network named '" + name + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  json manifest = {{"format", kFormat}, {"version", kVersion}, {"meta", ckpt.meta}};
  json nets = json::array();
  for (const auto& [name, net] : ckpt.nets) nets.push_back(describe(name, net));
  manifest["nets"] = nets;
  out << manifest.dump() << '\n';
  for (const auto& entry : ckpt.nets) {
    const Vector p = entry.second.parameters();
    for (double v : p) {
      const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(v));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
  }
  if (!out) throw FormatError("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint is empty");
  json manifest;
  try {
    manifest = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }
  try {
    if (manifest.at("format") != kFormat) throw FormatError("not a checkpoint file");
    if (manifest.at("version") != kVersion) throw FormatError("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.meta = manifest.at("meta");
    for (const auto& desc : manifest.at("nets")) {
      FeatureNet net = skeleton(desc);
      Vector p(net.parameter_count());
      for (auto& v : p) {
        char bytes[8];
        if (!in.read(bytes, 8)) throw FormatError("checkpoint parameter data is truncated");
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes, 8);
        v = std::bit_cast<double>(to_little(bits));
      }
      net.set_parameters(p);
      ckpt.nets.emplace_back(desc.at("name").get<std::string>(), std::move(net));
    }
    if (in.peek() != std::char_traits<char>::eof())
      throw FormatError("checkpoint has trailing bytes");
    return ckpt;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("inconsistent checkpoint shapes: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint network: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return read_checkpoint(in);
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::uint64_t hash = 0xcbf29ce484222325ull;
  char buffer[4096];
  while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ull;
    }
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

} // namespace dmmd
