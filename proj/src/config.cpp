#include "ie2d/config.hpp"

#include <string>

#include "ie2d/errors.hpp"

namespace ie2d {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid model config: " + what);
  };
  require(depth >= 1, "depth must be >= 1 (got " + std::to_string(depth) + ")");
  require(depth < 16, "depth must be < 16 (got " + std::to_string(depth) + ")");
  require(base_channels >= 1, "base_channels must be >= 1");
  require(kernel_size >= 1, "kernel_size must be >= 1");
  require(convs_per_level >= 1, "convs_per_level must be >= 1");
  require(output_classes >= 1, "output_classes must be >= 1");
  require(input_size >= 1, "input_size must be >= 1");
  const int factor = 1 << depth;
  require(input_size % factor == 0,
          "input_size " + std::to_string(input_size) + " is not divisible by 2^depth = " +
              std::to_string(factor));
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},           {"depth", c.depth},
          {"base_channels", c.base_channels},     {"kernel_size", c.kernel_size},
          {"convs_per_level", c.convs_per_level}, {"output_classes", c.output_classes},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "input_size") c.input_size = value.get<int>();
      else if (key == "depth") c.depth = value.get<int>();
      else if (key == "base_channels") c.base_channels = value.get<int>();
      else if (key == "kernel_size") c.kernel_size = value.get<int>();
      else if (key == "convs_per_level") c.convs_per_level = value.get<int>();
      else if (key == "output_classes") c.output_classes = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config key '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace ie2d
