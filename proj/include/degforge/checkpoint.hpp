#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "degforge/nn/graph.hpp"

namespace degforge::checkpoint {

// Checkpoint container: a directory holding manifest.json plus one .bin blob
// per section. Blobs are flat little-endian float32 arrays; the manifest
// carries a per-tensor shape index with byte offsets.
//
// manifest.json layout:
//   { "schema_version": 1,
//     "sections": { "<name>": { "file": "<name>.bin",
//                               "tensors": [ {"name","shape","offset"} ... ] } },
//     "meta": { ... arbitrary config (schedule, codec, training, seed) ... } }

inline constexpr int kSchemaVersion = 1;

// Writes/overwrites one section blob and updates the manifest.
void save_section(const std::string& dir, const std::string& section,
                  const std::vector<const nn::Param*>& params);

// Loads a section into an existing ParamStore; shapes must match exactly.
void load_section(const std::string& dir, const std::string& section, nn::ParamStore& store);

bool has_section(const std::string& dir, const std::string& section);

// Raw bytes of a section blob, for frozen-weights comparisons.
std::string section_bytes(const std::string& dir, const std::string& section);

// Free-form metadata block.
void save_meta(const std::string& dir, const nlohmann::ordered_json& meta);
nlohmann::ordered_json load_meta(const std::string& dir);

}  // namespace degforge::checkpoint
