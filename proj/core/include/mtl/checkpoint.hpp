#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mtl/models.hpp"

namespace mtl {

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "parameters.bin";

// Manifest + parameter blob. The blob is a sequence of named float64 tensors
// closed by a CRC-32 of everything before it; the manifest repeats the CRC.
struct Checkpoint {
  nlohmann::json manifest;
  ModelGraph model;
};

struct CheckpointInfo {
  std::string run_id;
  std::string config_snapshot;  // verbatim config text
  std::size_t epoch = 0;
  nlohmann::json validation_losses = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();
};

// Writes into a sibling temporary directory and renames it into place, so an
// interrupted save never leaves a half-written checkpoint at `dir`.
void save_checkpoint(const std::filesystem::path& dir, ModelGraph& model, const CheckpointInfo& info);

// Validates the checksum and rebuilds the graph from the manifest before
// copying parameters; any mismatch throws without returning a partial model.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::uint32_t crc32_of(std::span<const char> bytes);

}  // namespace mtl
