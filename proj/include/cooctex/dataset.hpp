#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cooctex/config.hpp"
#include "cooctex/cooc.hpp"
#include "cooctex/image.hpp"
#include "cooctex/stats_bundle.hpp"

namespace cooctex {

/// An n x n region of the exemplar and where it came from.
struct TextureCrop {
  Image pixels;
  int y = 0;
  int x = 0;
};

enum class Split { kTrain, kTest };

/// Crops plus a disjoint train/test partition by index.
struct CropSet {
  std::vector<TextureCrop> crops;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Draws `count` crop origins uniformly at random (positions may repeat),
/// assigns the first ceil(train_fraction * count) of a seeded shuffle to
/// train, and re-draws test origins that collide with a train origin. When
/// the exemplar has too few positions for a disjoint test crop, that crop
/// moves to train. Throws InvalidArgument if the exemplar is smaller than n.
CropSet extract_crops(const Image& exemplar, int count, int crop_size, double train_fraction,
                      std::uint64_t seed);

/// Everything that determines a dataset's contents.
struct DatasetSpec {
  std::filesystem::path exemplar;
  int count = 2000;
  int crop_size = 128;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  int k = 4;
  CoocParams params;
  int scale = 32;
  /// Reuse this palette instead of fitting one on the exemplar.
  std::optional<Palette> palette;
};

/// Human-readable record of a built dataset (written next to the cache).
struct DatasetManifest {
  std::string exemplar_path;
  std::string exemplar_sha256;
  int count = 0;
  int crop_size = 0;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  int k = 0;
  CoocParams params;
  int scale = 32;
  std::string cache_path;
  std::string cache_key;

  KeyValueConfig to_config() const;
  static DatasetManifest from_config(const KeyValueConfig& cfg);
};

/// One training example: the crop, its raw tensor and its normalised tensor.
struct DatasetItem {
  const Image& crop;
  const CoocTensor& raw;
  const CoocTensor& normalized;
};

/// Built dataset held in memory.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DatasetManifest manifest, StatsBundle stats, CropSet crops,
          std::vector<CoocTensor> raw);

  const DatasetManifest& manifest() const { return manifest_; }
  const StatsBundle& stats() const { return stats_; }
  const std::vector<TextureCrop>& crops() const { return crops_.crops; }
  const std::vector<std::size_t>& indices(Split split) const {
    return split == Split::kTrain ? crops_.train : crops_.test;
  }
  std::size_t size() const { return crops_.crops.size(); }

  DatasetItem item(std::size_t i) const { return {crops_.crops[i].pixels, raw_[i], normalized_[i]}; }
  const CoocTensor& raw(std::size_t i) const { return raw_[i]; }
  const CoocTensor& normalized(std::size_t i) const { return normalized_[i]; }

  /// Index batches covering `split` once, in an order that depends only on
  /// (seed, epoch). The last batch may be short unless drop_last is set.
  std::vector<std::vector<std::size_t>> batches(Split split, int batch_size, int epoch,
                                                bool drop_last = false) const;

 private:
  DatasetManifest manifest_;
  StatsBundle stats_;
  CropSet crops_;
  std::vector<CoocTensor> raw_;
  std::vector<CoocTensor> normalized_;
};

/// Key identifying a cache entry: exemplar hash plus every parameter.
std::string dataset_cache_key(const DatasetSpec& spec, const std::string& exemplar_sha256);

/// Loads the cached dataset for `spec` from `cache_root`, or builds it:
/// fits the palette (unless given), extracts crops, computes every tensor,
/// fits the normaliser on the train split and writes the cache container and
/// manifest. A cache that fails its checksum or does not match is rebuilt
/// with a warning.
Dataset build_dataset(const DatasetSpec& spec, const std::filesystem::path& cache_root);

/// Cache container IO (exposed for tests and tools).
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace cooctex
