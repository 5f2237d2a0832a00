// Checkpoint files: JSON header (layer shapes, seed, provenance) followed by
// the flat parameter vector as little-endian 64-bit floats.
//
//   8 bytes  magic "HMCKPT1\n"
//   u64      header length in bytes
//   ...      header JSON
//   ...      parameter_count() f64 values
#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hammeta/common.hpp"
#include "hammeta/model.hpp"

namespace hammeta::io {

using json = nlohmann::json;

namespace detail {
constexpr char kCkptMagic[8] = {'H', 'M', 'C', 'K', 'P', 'T', '1', '\n'};

inline void put_u64_ckpt(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
}  // namespace detail

struct Checkpoint {
  nn::ModelParams params;
  json header;
};

inline json checkpoint_layer_schema() {
  json layers = json::array();
  for (const nn::LayerDef& l : nn::kLayers) {
    layers.push_back(json{{"name", l.name}, {"in", l.in}, {"out", l.out}});
  }
  return layers;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const nn::ModelParams& params, json provenance) {
  json header{{"schema_version", 1},
              {"kind", "checkpoint"},
              {"param_count", nn::parameter_count()},
              {"layers", checkpoint_layer_schema()},
              {"provenance", std::move(provenance)}};
  const std::string header_str = header.dump();

  std::string bytes;
  bytes.append(detail::kCkptMagic, 8);
  detail::put_u64_ckpt(bytes, header_str.size());
  bytes += header_str;
  const std::vector<double> flat = params.flatten();
  for (double d : flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    detail::put_u64_ckpt(bytes, bits);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), detail::kCkptMagic, 8) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  std::uint64_t hlen = 0;
  for (int i = 7; i >= 0; --i) {
    hlen = (hlen << 8) | static_cast<unsigned char>(bytes[8 + i]);
  }
  if (bytes.size() < 16 + hlen) throw IoError("truncated checkpoint header");
  Checkpoint ck;
  ck.header = json::parse(bytes.substr(16, hlen));
  const std::size_t count = ck.header.at("param_count").get<std::size_t>();
  if (count != nn::parameter_count()) {
    throw IoError("checkpoint parameter count mismatch");
  }
  if (bytes.size() != 16 + hlen + count * 8) {
    throw IoError("truncated checkpoint payload");
  }
  std::vector<double> flat(count);
  const char* p = bytes.data() + 16 + hlen;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | static_cast<unsigned char>(p[i * 8 + b]);
    }
    std::memcpy(&flat[i], &bits, 8);
  }
  ck.params = nn::ModelParams::unflatten(flat);
  return ck;
}

}  // namespace hammeta::io
