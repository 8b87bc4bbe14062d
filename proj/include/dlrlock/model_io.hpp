// Model checkpoint file: magic "DLRL", version u32, u64-length-prefixed JSON
// architecture descriptor, then every parameter matrix in declaration order
// using the "DLRM" matrix format.
#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dlrlock/blocks.hpp"

namespace dlrlock {

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline nlohmann::json model_descriptor(const TransformerParams& m) {
  nlohmann::json j;
  j["vocab"] = m.vocab;
  j["d"] = m.d;
  j["n_max"] = m.n_max;
  j["heads"] = m.heads;
  j["d_ff"] = m.d_ff;
  j["n_layers"] = m.n_layers;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& f : m.ffn) {
    nlohmann::json lj;
    if (f.kind == FfnBlock::Kind::swiglu) {
      lj["kind"] = "swiglu";
    } else {
      lj["kind"] = "dlr";
      lj["r"] = f.dlr.r;
      lj["L"] = f.dlr.depth();
    }
    layers.push_back(lj);
  }
  j["ffn"] = layers;
  return j;
}

inline void save_model(const std::string& path, const TransformerParams& m) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("save_model: cannot open " + path);
  os.write("DLRL", 4);
  std::uint32_t ver = kModelFormatVersion;
  os.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::string header = model_descriptor(m).dump();
  std::uint64_t hlen = header.size();
  os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : collect_params(m)) save_matrix(os, p->value);
  if (!os) throw FormatError("save_model: write failed");
}

inline TransformerParams load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("load_model: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "DLRL", 4) != 0)
    throw FormatError("load_model: bad magic, expected DLRL");
  std::uint32_t ver = 0;
  is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (ver != kModelFormatVersion)
    throw FormatError("load_model: unsupported version " + std::to_string(ver));
  std::uint64_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw FormatError("load_model: truncated header");
  nlohmann::json j = nlohmann::json::parse(header);

  // Build an architecture skeleton, then overwrite every matrix from the file.
  ToyModelConfig cfg;
  cfg.vocab = j.at("vocab").get<std::size_t>();
  cfg.d = j.at("d").get<std::size_t>();
  cfg.n_max = j.at("n_max").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.d_ff = j.at("d_ff").get<std::size_t>();
  cfg.n_layers = j.at("n_layers").get<std::size_t>();
  TransformerParams m = init_transformer(cfg, Rng(0));
  const auto& layers = j.at("ffn");
  if (layers.size() != cfg.n_layers) throw FormatError("load_model: layer count mismatch");
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const auto& lj = layers[l];
    if (lj.at("kind") == "dlr") {
      m.ffn[l].kind = FfnBlock::Kind::dlr;
      m.ffn[l].dlr = init_dlrnet(cfg.d, lj.at("r").get<std::size_t>(),
                                 lj.at("L").get<std::size_t>(), Rng(0),
                                 "layer" + std::to_string(l) + ".dlr");
    }
  }
  for (const auto& p : collect_params(m)) {
    Matrix v = load_matrix(is);
    if (!v.same_shape(p->value))
      throw FormatError("load_model: shape mismatch for " + p->name);
    p->value = std::move(v);
  }
  return m;
}

}  // namespace dlrlock
