#include "cooctex/image.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>

#include "cooctex/error.hpp"

namespace cooctex {

namespace {

cv::Mat to_mat8(const Image& image) {
  cv::Mat mat(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(y, x, c), 0.0f, 1.0f);
        // OpenCV stores BGR.
        row[x][2 - c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  }
  return mat;
}

Image from_mat(const cv::Mat& decoded) {
  if (decoded.empty()) throw FormatError("could not decode image");
  cv::Mat mat;
  if (decoded.channels() == 1)
    cv::cvtColor(decoded, mat, cv::COLOR_GRAY2BGR);
  else if (decoded.channels() == 4)
    cv::cvtColor(decoded, mat, cv::COLOR_BGRA2BGR);
  else
    mat = decoded;
  // Divide exactly as quantize8 does so a PNG round trip and quantize8 agree bit for bit.
  cv::Mat wide;
  const float scale = mat.depth() == CV_16U ? 65535.0f : 255.0f;
  if (mat.depth() == CV_16U)
    wide = mat;
  else
    mat.convertTo(wide, CV_16UC3);
  Image image(wide.rows, wide.cols);
  for (int y = 0; y < wide.rows; ++y) {
    const auto* row = wide.ptr<cv::Vec3w>(y);
    for (int x = 0; x < wide.cols; ++x)
      for (int c = 0; c < 3; ++c) image.at(y, x, c) = row[x][2 - c] / scale;
  }
  return image;
}

}  // namespace

Image::Image(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(height) * width * kChannels, fill) {
  if (height < 0 || width < 0) throw InvalidArgument("negative image size");
}

Image Image::crop(int y, int x, int h, int w) const {
  if (y < 0 || x < 0 || h < 0 || w < 0 || y + h > height_ || x + w > width_)
    throw InvalidArgument("crop " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                          std::to_string(y) + "," + std::to_string(x) + ") exceeds " +
                          std::to_string(height_) + "x" + std::to_string(width_));
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    const float* src = data_.data() + index(y + r, x, 0);
    std::copy(src, src + static_cast<std::size_t>(w) * kChannels, &out.at(r, 0, 0));
  }
  return out;
}

void Image::clamp() {
  for (float& v : data_) v = std::clamp(v, 0.0f, 1.0f);
}

std::vector<double> Image::to_double() const { return {data_.begin(), data_.end()}; }

Image load_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw FormatError("cannot read image " + path.string());
  return from_mat(mat);
}

void save_png(const Image& image, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), to_mat8(image)))
    throw Error("cannot write image " + path.string());
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat8(image), bytes)) throw Error("png encoding failed");
  return bytes;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<std::uint8_t*>(bytes.data()));
  return from_mat(cv::imdecode(buf, cv::IMREAD_UNCHANGED));
}

Image quantize8(const Image& image) {
  Image out = image;
  for (float& v : out.data()) v = std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f) / 255.0f;
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw ShapeMismatch("mean_abs_diff: image sizes differ");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.data().size());
}

Image tile_images(const std::vector<Image>& tiles, int rows, int cols, int gap, float fill) {
  if (tiles.empty() || rows * cols != static_cast<int>(tiles.size()))
    throw InvalidArgument("tile_images: rows*cols must equal the tile count");
  const int th = tiles.front().height(), tw = tiles.front().width();
  for (const Image& t : tiles)
    if (t.height() != th || t.width() != tw) throw ShapeMismatch("tiles differ in size");
  Image out(rows * th + (rows - 1) * gap, cols * tw + (cols - 1) * gap, fill);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const Image& t = tiles[r * cols + c];
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x)
          for (int ch = 0; ch < 3; ++ch)
            out.at(r * (th + gap) + y, c * (tw + gap) + x, ch) = t.at(y, x, ch);
    }
  return out;
}

}  // namespace cooctex
