#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ie2d/image.hpp"
#include "ie2d/tensor.hpp"

namespace ie2d {

// One scan: ordered slices with their ground-truth masks.
struct Volume {
  std::string id;
  std::vector<GrayImage> images;  // values in [0,1]
  std::vector<GrayImage> masks;   // values in {0,1}

  std::size_t slices() const { return images.size(); }
};

struct SampleBatch {
  Tensor<float> images;  // (N,1,S,S)
  Tensor<float> masks;   // (N,1,S,S)
  std::vector<std::string> volume_ids;
  std::vector<int> slice_indices;

  int size() const { return images.n(); }
  // Throws DimensionError/IngestionError when stack lengths differ, a mask is
  // not strictly binary, or an image leaves [0,1].
  void validate() const;
};

struct SampleRef {
  int volume = 0;
  int slice = 0;
};

// Stacks slices of equal size into a batch. Image and mask overrides (e.g.
// augmented copies) may be passed in the same order as `refs`.
SampleBatch make_batch(std::span<const Volume> volumes, std::span<const SampleRef> refs);
SampleBatch make_batch(std::span<const GrayImage> images, std::span<const GrayImage> masks,
                       std::vector<std::string> volume_ids, std::vector<int> slice_indices);

// Manifest line: "volume_id,slice_index,image_file,mask_file" (no header).
struct ManifestEntry {
  std::string volume_id;
  int slice_index = 0;
  std::string image_file;
  std::string mask_file;

  bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Loads 8-bit grayscale images and binary masks listed in `manifest`, resizing
// to input_size x input_size (bilinear for images, nearest + 0.5 threshold for
// masks). Volumes come back in first-appearance order, slices sorted by index.
std::vector<Volume> load_pairs(const std::filesystem::path& image_dir,
                               const std::filesystem::path& mask_dir,
                               const std::vector<ManifestEntry>& manifest, int input_size);

// Writes <dir>/images/*.png, <dir>/masks/*.png and <dir>/manifest.csv.
void write_corpus(const std::filesystem::path& dir, const std::vector<Volume>& volumes);
// Reads a corpus written by write_corpus.
std::vector<Volume> load_corpus(const std::filesystem::path& dir, int input_size);

// Leave-one-out folds.
struct Fold {
  std::string test_volume;
  std::vector<std::string> train_volumes;
  std::string val_volume;
};

struct SplitPlan {
  std::vector<Fold> folds;
  std::vector<std::pair<std::string, std::string>> same_patient;

  // Throws ConfigError for the validation volume or an unknown id.
  const Fold& fold_for(const std::string& test_volume) const;
};

// One fold per non-validation volume. Training uses every other volume except
// the validation volume and any volume of the test volume's patient.
SplitPlan make_loocv_splits(const std::vector<std::string>& volume_ids,
                            const std::string& val_volume_id,
                            const std::vector<std::pair<std::string, std::string>>& same_patient);

}  // namespace ie2d
