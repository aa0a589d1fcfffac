#pragma once

// Checkpoint file:
//   "HBCK" | u32 version (1) | u32 manifest byte length | manifest JSON |
//   flat little-endian float32 blob
// The manifest records the UNetConfig and, per tensor in store order, its
// name, shape and element offset into the blob.

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "hb/errors.hpp"
#include "hb/unet.hpp"
#include "hb/video.hpp"

namespace hb {

inline nlohmann::json to_json(const UNetConfig& c) {
  return {{"latent_channels", c.latent_channels},
          {"base_channels", c.base_channels},
          {"channel_mults", c.channel_mults},
          {"blocks_per_level", c.blocks_per_level},
          {"up_blocks_per_level", c.up_blocks_per_level},
          {"middle_blocks", c.middle_blocks},
          {"temporal_attention", c.temporal_attention},
          {"text_dim", c.text_dim},
          {"text_tokens", c.text_tokens},
          {"time_embed_dim", c.time_embed_dim},
          {"fps_embed", c.fps_embed},
          {"norm_groups", c.norm_groups}};
}

/// Missing keys keep their defaults; a missing up_blocks_per_level mirrors
/// blocks_per_level. Unknown keys are rejected.
inline UNetConfig unet_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("unet config must be an object");
  UNetConfig c;
  bool has_up = false;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "latent_channels") c.latent_channels = v.get<int>();
      else if (key == "base_channels") c.base_channels = v.get<int>();
      else if (key == "channel_mults") c.channel_mults = v.get<std::vector<int>>();
      else if (key == "blocks_per_level") c.blocks_per_level = v.get<std::vector<int>>();
      else if (key == "up_blocks_per_level") { c.up_blocks_per_level = v.get<std::vector<int>>(); has_up = true; }
      else if (key == "middle_blocks") c.middle_blocks = v.get<int>();
      else if (key == "temporal_attention") c.temporal_attention = v.get<bool>();
      else if (key == "text_dim") c.text_dim = v.get<int>();
      else if (key == "text_tokens") c.text_tokens = v.get<int>();
      else if (key == "time_embed_dim") c.time_embed_dim = v.get<int>();
      else if (key == "fps_embed") c.fps_embed = v.get<bool>();
      else if (key == "norm_groups") c.norm_groups = v.get<int>();
      else throw ConfigError("unet: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("unet: ") + e.what());
  }
  if (!has_up) c.up_blocks_per_level = c.blocks_per_level;
  c.validate();
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const UNetConfig& config,
                            const ParameterStore<float>& params) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const nlohmann::json manifest = {{"config", to_json(config)}, {"tensors", tensors}, {"total", offset}};
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write("HBCK", 4);
  detail::put_u32(os, 1);
  detail::put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : params)
    for (float v : t.data()) detail::put_f32(os, v);
  if (!os) throw IoError("checkpoint write failed: " + path.string());
}

inline void save_checkpoint(const std::filesystem::path& path, const DenoiserModel<float>& model) {
  save_checkpoint(path, model.config, model.params);
}

inline DenoiserModel<float> load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact("checkpoint not found: " + path.string());
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "HBCK", 4) != 0)
    throw IoError("not a checkpoint: " + path.string());
  if (detail::get_u32(is) != 1) throw IoError("unsupported checkpoint version in " + path.string());
  const std::uint32_t len = detail::get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError("truncated checkpoint manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint manifest: ") + e.what());
  }
  DenoiserModel<float> model{unet_config_from_json(manifest.at("config")), {}};
  const auto total = manifest.at("total").get<std::size_t>();
  std::vector<float> blob(total);
  try {
    for (auto& v : blob) v = detail::get_f32(is);
  } catch (const IoError&) {
    throw IoError("truncated checkpoint blob in " + path.string());
  }
  for (const auto& e : manifest.at("tensors")) {
    Shape s = e.at("shape").get<Shape>();
    const auto off = e.at("offset").get<std::size_t>();
    const std::size_t n = shape_size(s);
    if (off + n > total) throw IoError("checkpoint tensor exceeds blob");
    model.params.add(e.at("name").get<std::string>(),
                     Tensor<float>(std::move(s), std::vector<float>(blob.begin() + off, blob.begin() + off + n)));
  }
  return model;
}

}  // namespace hb
