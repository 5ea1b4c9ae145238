#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

namespace ie2d {

// Architecture hyperparameters shared by the U-Net, the CAE and the imitating
// encoder. Defaults are the 128x128 / depth-5 / 16-kernel / 10x10 setup.
struct ModelConfig {
  int input_size = 128;
  int depth = 5;  // number of 2x2 downsamplings
  int base_channels = 16;
  int kernel_size = 10;
  int convs_per_level = 2;
  int output_classes = 1;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;

  // Channels of contracting level `level` (0-based); the bottleneck reuses the
  // deepest level's count.
  int level_channels(int level) const { return base_channels << level; }
  int level_size(int level) const { return input_size >> level; }
  int latent_size() const { return input_size >> depth; }
  int latent_channels() const { return level_channels(depth - 1); }
  std::size_t latent_length() const {
    return static_cast<std::size_t>(latent_size()) * latent_size() * latent_channels();
  }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace ie2d
