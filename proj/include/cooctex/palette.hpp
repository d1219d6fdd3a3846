#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cooctex/image.hpp"

namespace cooctex {

using Rgb = std::array<double, 3>;

/// Lower bound on every per-channel cluster spread, in channel units.
inline constexpr double kSpreadFloor = 1.0 / 255.0;

/// k colour cluster centres with per-channel standard deviations.
struct Palette {
  std::vector<Rgb> centers;
  std::vector<Rgb> spreads;

  int k() const { return static_cast<int>(centers.size()); }

  /// Throws InvalidArgument unless sizes agree, k >= 2, centres are distinct
  /// and every spread is at least kSpreadFloor.
  void validate() const;

  bool operator==(const Palette&) const = default;
};

struct PaletteFitOptions {
  int max_iterations = 50;
  std::size_t max_samples = 100000;
};

/// k-means++ seeded Lloyd iterations on a uniform pixel subsample. Centres
/// are returned sorted by luminance so the cluster order is canonical.
/// Throws DegenerateClusters if the image has fewer than k distinct colours.
Palette fit_palette(const Image& image, int k, std::uint64_t seed,
                    const PaletteFitOptions& options = {});

/// Soft membership of `pixel` in each cluster: exp(-sum_i (p_i - c_i)^2 / s_i^2).
void soft_assign(const Rgb& pixel, const Palette& palette, std::span<double> weights);
std::vector<double> soft_assign(const Rgb& pixel, const Palette& palette);

/// Index of the centre nearest to `pixel` in spread-normalised distance.
int nearest_cluster(const Rgb& pixel, const Palette& palette);

}  // namespace cooctex
