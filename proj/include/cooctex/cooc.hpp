#pragma once

#include <span>
#include <vector>

#include "cooctex/image.hpp"
#include "cooctex/palette.hpp"

namespace cooctex {

/// Floor on the normalising factor Z of a co-occurrence matrix.
inline constexpr double kZFloor = 1e-12;

/// Spatial extent of the statistics: per-pixel patch, pair window and the
/// variance (in squared pixels) of the Gaussian distance weight.
struct CoocParams {
  int patch_size = 65;
  int window_size = 51;
  double sigma_sq = 51.0;

  /// Throws InvalidArgument unless both sizes are odd and positive and sigma_sq > 0.
  void validate() const;

  bool operator==(const CoocParams&) const = default;
};

/// k x k joint probability of palette clusters co-occurring near each other.
class CoocMatrix {
 public:
  CoocMatrix() = default;
  explicit CoocMatrix(int k);
  CoocMatrix(int k, std::vector<double> values);

  int k() const { return k_; }
  double operator()(int a, int b) const { return values_[a * k_ + b]; }
  double& operator()(int a, int b) { return values_[a * k_ + b]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  double sum() const;
  /// Largest |M(a,b) - M(b,a)|.
  double asymmetry() const;

  bool operator==(const CoocMatrix&) const = default;

 private:
  int k_ = 0;
  std::vector<double> values_;
};

/// Spatial grid of row-stacked k x k matrices, stored (y, x, a*k + b).
class CoocGrid {
 public:
  CoocGrid() = default;
  CoocGrid(int height, int width, int k);
  CoocGrid(int height, int width, int k, std::vector<double> values);

  int height() const { return height_; }
  int width() const { return width_; }
  int k() const { return k_; }
  int channels() const { return k_ * k_; }
  std::size_t cell_count() const { return static_cast<std::size_t>(height_) * width_; }

  std::span<double> cell(int y, int x);
  std::span<const double> cell(int y, int x) const;
  CoocMatrix matrix(int y, int x) const;
  void set_matrix(int y, int x, const CoocMatrix& m);

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// Per-cell average of all matrices.
  CoocMatrix mean_matrix() const;

  bool same_shape(const CoocGrid& other) const {
    return height_ == other.height_ && width_ == other.width_ && k_ == other.k_;
  }

  bool operator==(const CoocGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int k_ = 0;
  std::vector<double> values_;
};

/// Per-pixel statistics of an image (H x W x k^2).
class CoocVolume : public CoocGrid {
 public:
  using CoocGrid::CoocGrid;
};

/// Downsampled volume (H/s x W/s x k^2): the generator's condition.
class CoocTensor : public CoocGrid {
 public:
  CoocTensor() = default;
  CoocTensor(int height, int width, int k, int scale = 1)
      : CoocGrid(height, width, k), scale_(scale) {}
  CoocTensor(int height, int width, int k, int scale, std::vector<double> values)
      : CoocGrid(height, width, k, std::move(values)), scale_(scale) {}

  /// Single-cell tensor holding one matrix.
  static CoocTensor from_matrix(const CoocMatrix& m, int scale = 1);

  int scale() const { return scale_; }
  void set_scale(int s) { scale_ = s; }

  bool operator==(const CoocTensor&) const = default;

 private:
  int scale_ = 1;
};

/// Sum of absolute entry differences; grids must share shape.
double l1_distance(const CoocGrid& a, const CoocGrid& b);
double l1_distance(const CoocMatrix& a, const CoocMatrix& b);

/// Soft-assignment maps, laid out (cluster, y, x), for an (y, x, c) RGB buffer.
std::vector<double> assignment_maps(std::span<const double> rgb, int height, int width,
                                    const Palette& palette);

/// Statistics of a whole patch: every ordered pixel pair (p, q) of the patch
/// with q inside the window around p. Throws DegenerateStatistics when Z
/// falls below kZFloor.
CoocMatrix cooc_matrix(const Image& patch, const Palette& palette, const CoocParams& params);
CoocMatrix cooc_matrix(std::span<const double> rgb, int height, int width,
                       const Palette& palette, const CoocParams& params);

/// What to do with a position whose soft-assignment mass Z is below kZFloor.
/// kThrow raises DegenerateStatistics; kFloor divides by kZFloor instead (the
/// matrix then carries almost no mass), matching the training loss. Use
/// kFloor when measuring generated images, which may leave the palette.
enum class ZPolicy { kThrow, kFloor };

/// Per-pixel statistics over the patch centred at each pixel, clamped to the
/// image bounds. Runs in O(window^2 * k^2 * H * W) independent of patch size.
CoocVolume cooc_volume(const Image& image, const Palette& palette, const CoocParams& params,
                       ZPolicy policy = ZPolicy::kThrow);
CoocVolume cooc_volume(std::span<const double> rgb, int height, int width,
                       const Palette& palette, const CoocParams& params,
                       ZPolicy policy = ZPolicy::kThrow);

/// Block average over s x s cells. Throws InvalidArgument if s does not
/// divide both dimensions.
CoocTensor downsample_volume(const CoocVolume& volume, int s);

/// cooc_volume followed by downsample_volume.
CoocTensor cooc_tensor(const Image& image, const Palette& palette, const CoocParams& params,
                       int s, ZPolicy policy = ZPolicy::kThrow);

struct CoocLossResult {
  double loss = 0.0;
  /// d loss / d rgb, same (y, x, c) layout as the input; empty unless requested.
  std::vector<double> pixel_grad;
};

/// L1 distance between the downsampled statistics of `rgb` and `target`,
/// summed over every tensor entry, with its gradient w.r.t. the pixels.
/// The palette is held fixed. Z is floored at kZFloor instead of throwing so
/// that training never aborts on a washed-out sample.
CoocLossResult cooc_l1(std::span<const double> rgb, int height, int width,
                       const CoocTensor& target, const Palette& palette,
                       const CoocParams& params, bool with_grad);

}  // namespace cooctex
