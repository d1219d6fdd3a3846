#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cooctex {

/// Interleaved RGB image, float channels in [0,1], row-major (y, x, c).
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, float fill = 0.0f);

  int height() const { return height_; }
  int width() const { return width_; }
  bool empty() const { return height_ == 0 || width_ == 0; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Sub-image [y, y+h) x [x, x+w); throws if out of bounds.
  Image crop(int y, int x, int h, int w) const;

  /// Clamps every channel into [0,1].
  void clamp();

  /// Channel values promoted to double, same (y, x, c) layout.
  std::vector<double> to_double() const;

  bool operator==(const Image&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

Image load_image(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

/// Lossless 8-bit PNG encoding. Deterministic for identical input.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_image(std::span<const std::uint8_t> bytes);

/// Quantizes to 8 bits and back, the way a PNG round trip would.
Image quantize8(const Image& image);

/// Mean absolute per-channel difference; images must share shape.
double mean_abs_diff(const Image& a, const Image& b);

/// Places `tiles` row-major in a grid with `gap` pixels of `fill` between cells.
Image tile_images(const std::vector<Image>& tiles, int rows, int cols, int gap = 0,
                  float fill = 1.0f);

}  // namespace cooctex
