#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ie2d/config.hpp"
#include "ie2d/dataset.hpp"
#include "ie2d/image.hpp"
#include "ie2d/parameter_store.hpp"

namespace ie2d {

inline constexpr float kBinarizeThreshold = 0.5f;

// Set-based DSC of two binary maps. Two empty maps score 1.
double binary_dice(std::span<const float> pred, std::span<const float> truth);

struct VolumeScore {
  double unet = 0.0;
  double ie2d = 0.0;
};

enum class DiceAggregation {
  SliceMean,  // mean of per-slice DSCs
  Pooled,     // one DSC over all pixels of the volume
};

// DSC of a volume's predicted slices against its ground truth.
double volume_dice(std::span<const GrayImage> pred, std::span<const GrayImage> truth,
                   DiceAggregation aggregation = DiceAggregation::SliceMean);

// Runs inference on every slice (in chunks of `batch` slices), binarizes at 0.5
// and scores both heads against the ground truth.
VolumeScore evaluate_volume(const ModelConfig& config, const ParameterStore<float>& params,
                            const Volume& volume,
                            DiceAggregation aggregation = DiceAggregation::SliceMean,
                            int batch = 8);

// Table of DSCs in [0,1], one row per test volume and one column per model.
struct EvalReport {
  std::vector<std::string> columns;  // e.g. {"dsc_unet", "dsc_ie2d"}
  struct Row {
    std::string volume_id;
    std::vector<double> dsc;
  };
  std::vector<Row> rows;

  // Mean and population standard deviation of each column.
  std::vector<double> mean() const;
  std::vector<double> stddev() const;
};

// CSV: header, one row per volume (DSC x 100, 2 decimals), then a
// "mean ± std" row using population std.
void write_report_csv(const std::filesystem::path& path, const EvalReport& report);
std::string format_report_csv(const EvalReport& report);

// Parsed back from a written report, values in [0,100] as printed.
struct ParsedReport {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  std::vector<double> mean;
  std::vector<double> stddev;
};
ParsedReport read_report_csv(const std::filesystem::path& path);

// Side-by-side panels: grayscale input, ground truth (green), U-Net (red),
// IE2D (blue); masks alpha-blended at 0.5. `truth` may be null, in which case
// its panel is left out.
inline constexpr int kOverlayGutter = 4;
inline constexpr double kOverlayAlpha = 0.5;
RgbImage render_overlay(const GrayImage& image, const GrayImage* truth, const GrayImage& unet_pred,
                        const GrayImage& ie2d_pred);

}  // namespace ie2d
