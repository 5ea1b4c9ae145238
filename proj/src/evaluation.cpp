#include "ie2d/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ie2d/errors.hpp"
#include "ie2d/image_io.hpp"
#include "ie2d/model.hpp"

namespace ie2d {
namespace fs = std::filesystem;

namespace {

constexpr const char* kAggregateLabel = "mean ± std";
constexpr const char* kPlusMinus = " ± ";

std::string fixed2(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

double binary_dice(std::span<const float> pred, std::span<const float> truth) {
  if (pred.size() != truth.size()) throw DimensionError("binary_dice: size mismatch");
  std::size_t inter = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= kBinarizeThreshold, t = truth[i] >= kBinarizeThreshold;
    inter += p && t;
    total += static_cast<std::size_t>(p) + static_cast<std::size_t>(t);
  }
  return total == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double volume_dice(std::span<const GrayImage> pred, std::span<const GrayImage> truth,
                   DiceAggregation aggregation) {
  if (pred.empty() || pred.size() != truth.size())
    throw DimensionError("volume_dice: need equally many (>0) predicted and true slices");
  if (aggregation == DiceAggregation::SliceMean) {
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      sum += binary_dice(pred[i].pixels, truth[i].pixels);
    return sum / static_cast<double>(pred.size());
  }
  std::vector<float> p, t;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    p.insert(p.end(), pred[i].pixels.begin(), pred[i].pixels.end());
    t.insert(t.end(), truth[i].pixels.begin(), truth[i].pixels.end());
  }
  return binary_dice(p, t);
}

VolumeScore evaluate_volume(const ModelConfig& config, const ParameterStore<float>& params,
                            const Volume& volume, DiceAggregation aggregation, int batch) {
  if (volume.slices() == 0) throw ConfigError("cannot evaluate empty volume '" + volume.id + "'");
  batch = std::max(batch, 1);
  const int size = config.input_size;
  std::vector<GrayImage> unet, ie2d;
  for (std::size_t start = 0; start < volume.slices(); start += batch) {
    const std::size_t end = std::min(volume.slices(), start + batch);
    std::vector<GrayImage> images(volume.images.begin() + start, volume.images.begin() + end);
    const SampleBatch b = make_batch(images, images, std::vector<std::string>(images.size()),
                                     std::vector<int>(images.size()));
    const auto result = ie2d_infer(config, params, b.images);
    // Only the first output channel is scored.
    for (int n = 0; n < b.size(); ++n) {
      GrayImage u(size, size), i(size, size);
      std::copy_n(result.unet.plane(n, 0).begin(), u.pixels.size(), u.pixels.begin());
      std::copy_n(result.ie2d.plane(n, 0).begin(), i.pixels.size(), i.pixels.begin());
      unet.push_back(binarize(u, kBinarizeThreshold));
      ie2d.push_back(binarize(i, kBinarizeThreshold));
    }
  }
  return {volume_dice(unet, volume.masks, aggregation), volume_dice(ie2d, volume.masks, aggregation)};
}

std::vector<double> EvalReport::mean() const {
  std::vector<double> m(columns.size(), 0.0);
  if (rows.empty()) return m;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < m.size(); ++c) m[c] += r.dsc.at(c);
  for (double& v : m) v /= static_cast<double>(rows.size());
  return m;
}

std::vector<double> EvalReport::stddev() const {
  const auto m = mean();
  std::vector<double> s(columns.size(), 0.0);
  if (rows.empty()) return s;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < s.size(); ++c) s[c] += (r.dsc.at(c) - m[c]) * (r.dsc.at(c) - m[c]);
  for (double& v : s) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "volume";
  for (const auto& c : report.columns) os << ',' << c;
  os << '\n';
  for (const auto& r : report.rows) {
    os << r.volume_id;
    for (double d : r.dsc) os << ',' << fixed2(100.0 * d);
    os << '\n';
  }
  const auto m = report.mean();
  const auto s = report.stddev();
  os << kAggregateLabel;
  for (std::size_t c = 0; c < m.size(); ++c)
    os << ',' << fixed2(100.0 * m[c]) << kPlusMinus << fixed2(100.0 * s[c]);
  os << '\n';
  return os.str();
}

void write_report_csv(const fs::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  out << format_report_csv(report);
  if (!out) throw IngestionError(path.string() + ": write failed");
}

ParsedReport read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string() + ": cannot open report");
  ParsedReport parsed;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty report");
  auto header = split_csv(line);
  parsed.columns.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw IngestionError(path.string() + ": wrong field count in '" + line + "'");
    if (fields[0] == kAggregateLabel) {
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto pos = fields[i].find(kPlusMinus);
        if (pos == std::string::npos) throw IngestionError(path.string() + ": bad aggregate");
        parsed.mean.push_back(std::stod(fields[i].substr(0, pos)));
        parsed.stddev.push_back(std::stod(fields[i].substr(pos + std::string(kPlusMinus).size())));
      }
      continue;
    }
    std::vector<double> values;
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(std::stod(fields[i]));
    parsed.rows.emplace_back(fields[0], std::move(values));
  }
  return parsed;
}

RgbImage render_overlay(const GrayImage& image, const GrayImage* truth, const GrayImage& unet_pred,
                        const GrayImage& ie2d_pred) {
  const int w = image.width, h = image.height;
  auto same = [&](const GrayImage& g) { return g.width == w && g.height == h; };
  if (!same(unet_pred) || !same(ie2d_pred) || (truth && !same(*truth)))
    throw DimensionError("render_overlay: map sizes differ");

  struct Panel {
    const GrayImage* mask;
    std::uint8_t color[3];
  };
  std::vector<Panel> panels{{nullptr, {0, 0, 0}}};
  if (truth) panels.push_back({truth, {0, 255, 0}});
  panels.push_back({&unet_pred, {255, 0, 0}});
  panels.push_back({&ie2d_pred, {0, 0, 255}});

  const int count = static_cast<int>(panels.size());
  RgbImage out(count * w + (count - 1) * kOverlayGutter, h);
  std::fill(out.rgb.begin(), out.rgb.end(), std::uint8_t{255});
  for (int p = 0; p < count; ++p) {
    const int x0 = p * (w + kOverlayGutter);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double gray = std::clamp(image.at(x, y), 0.0f, 1.0f) * 255.0;
        std::uint8_t* px = out.pixel(x0 + x, y);
        const bool tinted = panels[p].mask && panels[p].mask->at(x, y) >= kBinarizeThreshold;
        for (int c = 0; c < 3; ++c) {
          const double v = tinted ? (1 - kOverlayAlpha) * gray + kOverlayAlpha * panels[p].color[c]
                                  : gray;
          px[c] = static_cast<std::uint8_t>(std::lround(v));
        }
      }
  }
  return out;
}

}  // namespace ie2d
