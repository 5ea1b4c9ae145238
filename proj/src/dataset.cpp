#include "ie2d/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "ie2d/errors.hpp"
#include "ie2d/image_io.hpp"

namespace ie2d {
namespace fs = std::filesystem;

namespace {

// Fraction of mask pixels that sit far from both 0 and 1.
double ambiguous_fraction(const GrayImage& mask) {
  std::size_t ambiguous = 0;
  for (float v : mask.pixels)
    if (v > 0.25f && v < 0.75f) ++ambiguous;
  return mask.pixels.empty() ? 0.0 : static_cast<double>(ambiguous) / mask.pixels.size();
}

GrayImage load_mask(const fs::path& path, int size) {
  GrayImage mask = read_png_gray(path);
  // Masks stored with raw labels {0,1} instead of {0,255}.
  const float peak = *std::max_element(mask.pixels.begin(), mask.pixels.end());
  if (peak > 0.0f && peak <= 1.0f / 255.0f + 1e-6f)
    for (float& v : mask.pixels) v *= 255.0f;
  const double ambiguous = ambiguous_fraction(mask);
  if (ambiguous > 0.05)
    throw IngestionError(path.string() + ": mask is not binary (" +
                         std::to_string(ambiguous * 100.0) + "% of pixels are ambiguous)");
  return binarize(resize_nearest(binarize(mask), size, size));
}

}  // namespace

void SampleBatch::validate() const {
  const Shape& s = images.shape();
  if (masks.shape() != s) throw DimensionError("batch: image and mask stacks differ in shape");
  if (volume_ids.size() != static_cast<std::size_t>(s.n) ||
      slice_indices.size() != static_cast<std::size_t>(s.n))
    throw DimensionError("batch: label lists do not match the stack length");
  for (float v : images.values())
    if (!(v >= 0.0f && v <= 1.0f)) throw IngestionError("batch: image value outside [0,1]");
  for (float v : masks.values())
    if (v != 0.0f && v != 1.0f) throw IngestionError("batch: mask is not strictly binary");
}

SampleBatch make_batch(std::span<const GrayImage> images, std::span<const GrayImage> masks,
                       std::vector<std::string> volume_ids, std::vector<int> slice_indices) {
  if (images.empty() || images.size() != masks.size())
    throw DimensionError("make_batch: need equally many (>0) images and masks");
  const int w = images[0].width, h = images[0].height;
  const int n = static_cast<int>(images.size());
  SampleBatch batch;
  batch.images = Tensor<float>(Shape{n, 1, h, w});
  batch.masks = Tensor<float>(Shape{n, 1, h, w});
  for (int i = 0; i < n; ++i) {
    if (images[i].width != w || images[i].height != h || masks[i].width != w ||
        masks[i].height != h)
      throw DimensionError("make_batch: slices differ in size");
    std::copy(images[i].pixels.begin(), images[i].pixels.end(), batch.images.sample(i).begin());
    std::copy(masks[i].pixels.begin(), masks[i].pixels.end(), batch.masks.sample(i).begin());
  }
  batch.volume_ids = std::move(volume_ids);
  batch.slice_indices = std::move(slice_indices);
  return batch;
}

SampleBatch make_batch(std::span<const Volume> volumes, std::span<const SampleRef> refs) {
  std::vector<GrayImage> images, masks;
  std::vector<std::string> ids;
  std::vector<int> slices;
  for (const SampleRef& r : refs) {
    const Volume& v = volumes[r.volume];
    images.push_back(v.images.at(r.slice));
    masks.push_back(v.masks.at(r.slice));
    ids.push_back(v.id);
    slices.push_back(r.slice);
  }
  return make_batch(images, masks, std::move(ids), std::move(slices));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(path.string() + ": cannot open manifest");
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    ManifestEntry e;
    try {
      if (fields.size() != 4) throw std::invalid_argument("expected 4 fields");
      e.volume_id = fields[0];
      std::size_t used = 0;
      e.slice_index = std::stoi(fields[1], &used);
      if (used != fields[1].size()) throw std::invalid_argument("bad slice index");
      e.image_file = fields[2];
      e.mask_file = fields[3];
    } catch (const std::exception& ex) {
      throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(path.string() + ": cannot open for writing");
  for (const auto& e : entries)
    out << e.volume_id << ',' << e.slice_index << ',' << e.image_file << ',' << e.mask_file
        << '\n';
  if (!out) throw IngestionError(path.string() + ": write failed");
}

std::vector<Volume> load_pairs(const fs::path& image_dir, const fs::path& mask_dir,
                               const std::vector<ManifestEntry>& manifest, int input_size) {
  if (manifest.empty()) throw IngestionError("manifest lists no slices");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ManifestEntry*>> groups;
  for (const auto& e : manifest) {
    auto [it, inserted] = groups.try_emplace(e.volume_id);
    if (inserted) order.push_back(e.volume_id);
    it->second.push_back(&e);
  }
  std::vector<Volume> volumes;
  for (const auto& id : order) {
    auto& entries = groups[id];
    std::stable_sort(entries.begin(), entries.end(),
                     [](auto* a, auto* b) { return a->slice_index < b->slice_index; });
    Volume v;
    v.id = id;
    for (const ManifestEntry* e : entries) {
      const fs::path image_path = image_dir / e->image_file;
      const fs::path mask_path = mask_dir / e->mask_file;
      if (!fs::exists(image_path)) throw IngestionError(image_path.string() + ": missing file");
      if (!fs::exists(mask_path)) throw IngestionError(mask_path.string() + ": missing file");
      GrayImage image = resize_bilinear(read_png_gray(image_path), input_size, input_size);
      for (float& p : image.pixels) p = std::clamp(p, 0.0f, 1.0f);
      v.images.push_back(std::move(image));
      v.masks.push_back(load_mask(mask_path, input_size));
    }
    if (v.slices() == 0) throw IngestionError("volume '" + id + "' has no slices");
    volumes.push_back(std::move(v));
  }
  return volumes;
}

void write_corpus(const fs::path& dir, const std::vector<Volume>& volumes) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "masks", ec);
  if (ec) throw IngestionError(dir.string() + ": cannot create corpus directories: " + ec.message());
  std::vector<ManifestEntry> manifest;
  for (const Volume& v : volumes) {
    for (std::size_t s = 0; s < v.slices(); ++s) {
      std::ostringstream name;
      name << v.id << '_' << std::setfill('0') << std::setw(3) << s << ".png";
      write_png_gray(dir / "images" / name.str(), v.images[s]);
      write_png_gray(dir / "masks" / name.str(), v.masks[s]);
      manifest.push_back({v.id, static_cast<int>(s), name.str(), name.str()});
    }
  }
  write_manifest(dir / "manifest.csv", manifest);
}

std::vector<Volume> load_corpus(const fs::path& dir, int input_size) {
  return load_pairs(dir / "images", dir / "masks", read_manifest(dir / "manifest.csv"),
                    input_size);
}

const Fold& SplitPlan::fold_for(const std::string& test_volume) const {
  for (const Fold& f : folds)
    if (f.test_volume == test_volume) return f;
  if (!folds.empty() && folds.front().val_volume == test_volume)
    throw ConfigError("validation volume '" + test_volume + "' cannot be a test volume");
  throw ConfigError("no fold for volume '" + test_volume + "'");
}

SplitPlan make_loocv_splits(const std::vector<std::string>& volume_ids,
                            const std::string& val_volume_id,
                            const std::vector<std::pair<std::string, std::string>>& same_patient) {
  if (volume_ids.size() < 3) throw ConfigError("leave-one-out needs at least 3 volumes");
  const std::set<std::string> known(volume_ids.begin(), volume_ids.end());
  if (known.size() != volume_ids.size()) throw ConfigError("duplicate volume ids");
  if (!known.count(val_volume_id))
    throw ConfigError("validation volume '" + val_volume_id + "' not in corpus");
  std::map<std::string, std::set<std::string>> partners;
  for (const auto& [a, b] : same_patient) {
    if (!known.count(a) || !known.count(b))
      throw ConfigError("same-patient pair " + a + "/" + b + " names an unknown volume");
    partners[a].insert(b);
    partners[b].insert(a);
  }
  SplitPlan plan;
  plan.same_patient = same_patient;
  for (const auto& test : volume_ids) {
    if (test == val_volume_id) continue;
    Fold fold{test, {}, val_volume_id};
    for (const auto& id : volume_ids) {
      if (id == test || id == val_volume_id || partners[test].count(id)) continue;
      fold.train_volumes.push_back(id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

}  // namespace ie2d
