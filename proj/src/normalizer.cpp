#include "cooctex/normalizer.hpp"

#include <cmath>
#include <spdlog/spdlog.h>

#include "cooctex/error.hpp"

namespace cooctex {

namespace {

CoocTensor map_channels(const CoocTensor& tensor, const Normalizer& n, bool forward) {
  if (tensor.channels() != n.channels())
    throw ShapeMismatch("normalizer has " + std::to_string(n.channels()) +
                        " channels, tensor has " + std::to_string(tensor.channels()));
  CoocTensor out = tensor;
  const std::size_t c = n.mean.size();
  auto values = out.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t ch = i % c;
    values[i] = forward ? (values[i] - n.mean[ch]) / n.std[ch] : values[i] * n.std[ch] + n.mean[ch];
  }
  return out;
}

}  // namespace

CoocTensor Normalizer::normalize(const CoocTensor& tensor) const {
  return map_channels(tensor, *this, true);
}

CoocTensor Normalizer::denormalize(const CoocTensor& tensor) const {
  return map_channels(tensor, *this, false);
}

Normalizer fit_normalizer(std::span<const CoocTensor> tensors) {
  if (tensors.empty()) throw InvalidArgument("fit_normalizer: empty collection");
  const int channels = tensors.front().channels();
  std::vector<double> sum(channels, 0.0);
  std::size_t count = 0;
  for (const CoocTensor& t : tensors) {
    if (t.channels() != channels) throw ShapeMismatch("fit_normalizer: mixed channel counts");
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) sum[i % channels] += v[i];
    count += t.cell_count();
  }
  Normalizer n;
  n.mean.resize(channels);
  for (int c = 0; c < channels; ++c) n.mean[c] = sum[c] / static_cast<double>(count);

  // Two-pass variance for accuracy.
  std::vector<double> sq(channels, 0.0);
  for (const CoocTensor& t : tensors) {
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - n.mean[i % channels];
      sq[i % channels] += d * d;
    }
  }
  n.std.resize(channels);
  int floored = 0;
  for (int c = 0; c < channels; ++c) {
    const double s = std::sqrt(sq[c] / static_cast<double>(count));
    if (s < kStdFloor) ++floored;
    n.std[c] = std::max(s, kStdFloor);
  }
  if (floored > 0)
    spdlog::warn("fit_normalizer: {} of {} channels have ~zero variance, std floored at {}",
                 floored, channels, kStdFloor);
  return n;
}

}  // namespace cooctex
