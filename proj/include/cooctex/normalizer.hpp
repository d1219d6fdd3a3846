#pragma once

#include <span>
#include <vector>

#include "cooctex/cooc.hpp"

namespace cooctex {

/// Standard deviations below this are replaced by it (with a warning).
inline constexpr double kStdFloor = 1e-6;

/// Per-channel (k^2 channels) standardisation of co-occurrence tensors.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> std;

  int channels() const { return static_cast<int>(mean.size()); }
  bool empty() const { return mean.empty(); }

  CoocTensor normalize(const CoocTensor& tensor) const;
  CoocTensor denormalize(const CoocTensor& tensor) const;

  bool operator==(const Normalizer&) const = default;
};

/// Statistics over every cell of every tensor in the collection.
Normalizer fit_normalizer(std::span<const CoocTensor> tensors);

}  // namespace cooctex
