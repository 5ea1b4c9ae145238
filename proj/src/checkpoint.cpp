#include "ie2d/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ie2d/errors.hpp"
#include "ie2d/model.hpp"

namespace ie2d {
namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "IE2D-CHECKPOINT 1";

std::string shape_string(const std::vector<int>& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

std::string read_section(std::istream& in, const std::string& tag, const fs::path& path) {
  std::string header;
  if (!std::getline(in, header)) throw IngestionError(path.string() + ": missing " + tag);
  std::istringstream hs(header);
  std::string name;
  std::size_t length = 0;
  if (!(hs >> name >> length) || name != tag)
    throw IngestionError(path.string() + ": expected section '" + tag + "', got '" + header + "'");
  std::string body(length, '\0');
  if (length && !in.read(body.data(), static_cast<std::streamsize>(length)))
    throw IngestionError(path.string() + ": truncated section '" + tag + "'");
  return body;
}

void write_section(std::ostream& out, const std::string& tag, const std::string& body) {
  out << tag << ' ' << body.size() << '\n';
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

}  // namespace

std::string checkpoint_manifest(const ParameterStore<float>& params) {
  std::string m;
  for (const auto& e : params.entries()) {
    m += e.name;
    m += '\t';
    m += scope_name(e.scope);
    m += '\t';
    m += shape_string(e.shape);
    m += "\tfloat32\n";
  }
  return m;
}

void save_checkpoint(const fs::path& path, const ModelConfig& config,
                     const ParameterStore<float>& params) {
  if (!params.same_layout(empty_model<float>(config)))
    throw CheckpointMismatch("parameters do not match the layout of the given config");
  std::string data;
  data.reserve(params.total_count() * 4);
  for (const auto& e : params.entries())
    for (float v : e.values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff),
                             static_cast<char>((bits >> 24) & 0xff)};
      data.append(bytes, 4);
    }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  out << kMagic << '\n';
  write_section(out, "config", to_json(config).dump() + "\n");
  write_section(out, "manifest", checkpoint_manifest(params));
  write_section(out, "data", data);
  if (!out) throw IngestionError(path.string() + ": write failed");
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string() + ": cannot open checkpoint");
  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic)
    throw IngestionError(path.string() + ": not an IE2D checkpoint");

  Checkpoint ckpt;
  const std::string config_text = read_section(in, "config", path);
  try {
    ckpt.config = model_config_from_json(nlohmann::json::parse(config_text));
    ckpt.config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw IngestionError(path.string() + ": bad config section: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointMismatch(path.string() + ": " + e.what());
  }
  const std::string manifest = read_section(in, "manifest", path);
  const std::string data = read_section(in, "data", path);

  // Rebuild the expected layout from the config and compare line by line.
  ParameterStore<float> expected = empty_model<float>(ckpt.config);
  if (checkpoint_manifest(expected) != manifest)
    throw CheckpointMismatch(path.string() +
                             ": parameter manifest does not match the stored model config");
  if (data.size() != expected.total_count() * 4)
    throw CheckpointMismatch(path.string() + ": data section holds " +
                             std::to_string(data.size()) + " bytes, expected " +
                             std::to_string(expected.total_count() * 4));

  std::size_t offset = 0;
  for (auto& e : expected.entries())
    for (float& v : e.values) {
      const auto* b = reinterpret_cast<const unsigned char*>(data.data() + offset);
      const std::uint32_t bits = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
                                 (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
      v = std::bit_cast<float>(bits);
      offset += 4;
    }
  ckpt.params = std::move(expected);
  return ckpt;
}

}  // namespace ie2d
