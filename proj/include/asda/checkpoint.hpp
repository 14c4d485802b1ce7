#pragma once

// Checkpoint format: <path>.json manifest + <path>.bin blob.
// The manifest lists {name, shape, dtype, byte_offset, byte_len} per
// parameter -- offsets contiguous and non-overlapping by construction,
// verified on load -- plus the config snapshot and step count. The blob is
// little-endian 32-bit floats in manifest order. 32-bit storage is the one
// place training values leave 64-bit. An empty parameter list is a valid
// checkpoint with an empty blob.

#include <json.hpp>

#include <fstream>

#include "asda/config.hpp"
#include "asda/model.hpp"

namespace asda {

// Writes params as manifest + blob; `manifest` may carry extra fields
// (format/step/config) and receives the "params" entry list.
inline void save_param_file(const std::string& path, const ParamMap& params,
                            nlohmann::json manifest) {
  std::vector<float> blob;
  nlohmann::json entries = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    const std::size_t bytes = p.tensor.numel() * sizeof(float);
    entries.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"dtype", "f32"},
                       {"byte_offset", offset},
                       {"byte_len", bytes}});
    for (double v : p.tensor.data()) blob.push_back(static_cast<float>(v));
    offset += bytes;
  }
  manifest["params"] = std::move(entries);

  std::ofstream mf(path + ".json");
  if (!mf) throw std::runtime_error("save_checkpoint: cannot write " + path + ".json");
  mf << manifest.dump(2) << "\n";

  std::ofstream bf(path + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("save_checkpoint: cannot write " + path + ".bin");
  static_assert(sizeof(float) == 4);
  bf.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (!bf) throw std::runtime_error("save_checkpoint: short write to " + path + ".bin");
}

// Loads a manifest + blob into an existing parameter list; names, shapes,
// offsets and total length must all line up or an integrity error throws.
// Returns the manifest for the caller's metadata (step, config).
inline nlohmann::json load_param_file(const std::string& path, ParamMap& params) {
  std::ifstream mf(path + ".json");
  if (!mf) throw std::runtime_error("load_checkpoint: cannot open " + path + ".json");
  nlohmann::json manifest;
  mf >> manifest;

  std::ifstream bf(path + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("load_checkpoint: cannot open " + path + ".bin");
  std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  const auto& entries = manifest.at("params");
  if (entries.size() != params.size())
    throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(entries.size()) +
                             " parameters, expected " + std::to_string(params.size()));
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    const std::string name = e.at("name").get<std::string>();
    if (name != params[i].name)
      throw std::runtime_error("load_checkpoint: parameter order mismatch, manifest has '" + name +
                               "' where '" + params[i].name + "' was expected");
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    if (shape != params[i].tensor.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    const std::size_t off = e.at("byte_offset").get<std::size_t>();
    const std::size_t len = e.at("byte_len").get<std::size_t>();
    if (off != expected_offset)
      throw std::runtime_error("load_checkpoint: integrity error, non-contiguous offset for " +
                               name);
    if (len != params[i].tensor.numel() * sizeof(float))
      throw std::runtime_error("load_checkpoint: integrity error, byte length for " + name +
                               " does not match its shape");
    if (off + len > blob.size())
      throw std::runtime_error("load_checkpoint: integrity error, blob truncated at " + name);
    const float* src = reinterpret_cast<const float*>(blob.data() + off);
    auto& dst = params[i].tensor.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<double>(src[j]);
    expected_offset = off + len;
  }
  if (expected_offset != blob.size())
    throw std::runtime_error("load_checkpoint: integrity error, blob holds " +
                             std::to_string(blob.size()) + " bytes, manifest covers " +
                             std::to_string(expected_offset));
  return manifest;
}

inline void save_checkpoint(const std::string& path, const AsdaModel& model, std::size_t step) {
  nlohmann::json manifest;
  manifest["format"] = "asda-checkpoint-v1";
  manifest["step"] = step;
  manifest["config"] = config_to_json(model.cfg);
  save_param_file(path, model.all_params(), std::move(manifest));
}

struct LoadedCheckpoint {
  AsdaModel model;
  std::size_t step = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream mf(path + ".json");
  if (!mf) throw std::runtime_error("load_checkpoint: cannot open " + path + ".json");
  nlohmann::json manifest;
  mf >> manifest;
  if (manifest.value("format", "") != "asda-checkpoint-v1")
    throw std::runtime_error("load_checkpoint: " + path + ".json is not an asda checkpoint");

  RunConfig cfg = apply_config_json(manifest.at("config"), RunConfig::desk());
  LoadedCheckpoint out{AsdaModel::init(cfg, 0), manifest.at("step").get<std::size_t>()};
  ParamMap params = out.model.all_params();
  load_param_file(path, params);
  return out;
}

}  // namespace asda
