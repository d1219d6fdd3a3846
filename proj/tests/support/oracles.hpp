#pragma once

// Reference implementations used only by tests. They follow the definitions
// literally (explicit loops over pixel pairs) and share no code with the
// library's fast paths.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cooctex/cooc.hpp"
#include "cooctex/image.hpp"
#include "cooctex/palette.hpp"

namespace oracle {

/// exp(-sum_i (p_i - c_i)^2 / s_i^2), evaluated independently of the library.
double kernel(const double* pixel, const cooctex::Rgb& centre, const cooctex::Rgb& spread);

/// Double loop over every ordered pixel pair (p, q) of the buffer with q in
/// the window around p. Returns the k*k normalised matrix, row-major.
std::vector<double> cooc_matrix(std::span<const double> rgb, int height, int width,
                                const cooctex::Palette& palette,
                                const cooctex::CoocParams& params);

/// Per-pixel recomputation: crops the clamped patch around every pixel and
/// calls the pair oracle on it. Returns (y, x, k*k).
std::vector<double> cooc_volume(std::span<const double> rgb, int height, int width,
                                const cooctex::Palette& palette,
                                const cooctex::CoocParams& params);

/// Block average then L1 against `target`, built from cooc_volume above.
double cooc_l1(std::span<const double> rgb, int height, int width,
               const cooctex::CoocTensor& target, const cooctex::Palette& palette,
               const cooctex::CoocParams& params);

/// Central differences of f at x, one coordinate at a time.
std::vector<double> central_differences(const std::function<double(std::span<const double>)>& f,
                                        std::vector<double> x, double h);

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps gradients
/// below the resolution of double-precision central differences (h = 1e-5)
/// from being judged on roundoff alone.
double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace oracle

namespace fixtures {

/// Palette with the given centres and a uniform spread on every channel.
cooctex::Palette palette(std::vector<cooctex::Rgb> centres, double spread);

/// Image whose pixels are drawn from `colours` uniformly, plus Gaussian noise.
cooctex::Image random_image(int height, int width, const std::vector<cooctex::Rgb>& colours,
                            double noise, std::uint64_t seed);

/// Two-colour checkerboard with square cells of `cell` pixels.
cooctex::Image checkerboard(int height, int width, int cell, const cooctex::Rgb& a,
                            const cooctex::Rgb& b);

/// Procedural exemplars with spatially varying local statistics.
///   0: blobs whose size and colour balance drift across the image
///   1: stripes whose period and orientation drift
///   2: cells (Voronoi) whose density drifts, with speckle
/// `noise` is the standard deviation of per-channel Gaussian pixel noise.
cooctex::Image procedural_texture(int variant, int height, int width, std::uint64_t seed,
                                  double noise = 0.03);

}  // namespace fixtures
