#pragma once

#include <filesystem>
#include <string>

#include "ie2d/config.hpp"
#include "ie2d/parameter_store.hpp"

namespace ie2d {

// Single-file checkpoint:
//
//   IE2D-CHECKPOINT 1\n
//   config <n>\n<n bytes of ModelConfig JSON>\n
//   manifest <n>\n<n bytes: one "name\tSCOPE\td0xd1x...\tfloat32\n" line per parameter>
//   data <n>\n<n bytes: little-endian float32 values in manifest order>
//
// Saving and loading is bit-exact.
struct Checkpoint {
  ModelConfig config;
  ParameterStore<float> params;
};

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParameterStore<float>& params);

// Throws CheckpointMismatch when the manifest disagrees with the layout the
// stored config implies, IngestionError when the file is unreadable.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// The manifest text for a store (exposed for tests and tooling).
std::string checkpoint_manifest(const ParameterStore<float>& params);

}  // namespace ie2d
