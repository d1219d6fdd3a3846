#include "cooctex/palette.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <spdlog/spdlog.h>
#include <string>

#include "cooctex/error.hpp"

namespace cooctex {

namespace {

double squared_distance(const Rgb& a, const Rgb& b) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

std::vector<Rgb> sample_pixels(const Image& image, std::size_t max_samples, std::mt19937_64& rng) {
  const std::size_t n = image.pixel_count();
  auto pixel = [&](std::size_t i) {
    const auto d = image.data();
    return Rgb{d[3 * i], d[3 * i + 1], d[3 * i + 2]};
  };
  std::vector<Rgb> samples;
  if (n <= max_samples) {
    samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) samples.push_back(pixel(i));
    return samples;
  }
  // Uniform subsample without replacement, kept in raster order.
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < max_samples; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(max_samples);
  std::sort(idx.begin(), idx.end());
  samples.reserve(max_samples);
  for (std::size_t i : idx) samples.push_back(pixel(i));
  return samples;
}

std::vector<Rgb> kmeans_pp_init(const std::vector<Rgb>& points, int k, std::mt19937_64& rng) {
  std::vector<Rgb> centers;
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  centers.push_back(points[first(rng)]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
      total += d2[i];
    }
    if (total <= 0.0) throw DegenerateClusters("k-means++ ran out of distinct colours");
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    while (d2[chosen] <= 0.0) --chosen;
    centers.push_back(points[chosen]);
  }
  return centers;
}

}  // namespace

void Palette::validate() const {
  if (centers.size() != spreads.size())
    throw InvalidArgument("palette centre and spread counts differ");
  if (k() < 2) throw InvalidArgument("palette needs at least two clusters");
  for (int a = 0; a < k(); ++a) {
    for (int i = 0; i < 3; ++i)
      if (!(spreads[a][i] >= kSpreadFloor))
        throw InvalidArgument("cluster spread below floor in cluster " + std::to_string(a));
    for (int b = a + 1; b < k(); ++b)
      if (centers[a] == centers[b]) throw InvalidArgument("palette centres are not distinct");
  }
}

Palette fit_palette(const Image& image, int k, std::uint64_t seed,
                    const PaletteFitOptions& options) {
  if (image.empty()) throw InvalidArgument("fit_palette: empty image");
  if (k < 2 || k > 16) throw InvalidArgument("fit_palette: k must be in [2, 16]");
  if (k != 2 && k != 4 && k != 8)
    spdlog::warn("fit_palette: k={} is outside the usual {{2, 4, 8}}", k);

  std::mt19937_64 rng(seed);
  const auto points = sample_pixels(image, options.max_samples, rng);
  {
    std::set<Rgb> distinct;
    for (const Rgb& p : points) {
      distinct.insert(p);
      if (static_cast<int>(distinct.size()) >= k) break;
    }
    if (static_cast<int>(distinct.size()) < k)
      throw DegenerateClusters("image has " + std::to_string(distinct.size()) +
                               " distinct colours, fewer than k=" + std::to_string(k));
  }

  std::vector<Rgb> centers = kmeans_pp_init(points, k, rng);
  std::vector<int> label(points.size(), -1);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      double best_d = squared_distance(points[i], centers[0]);
      for (int l = 1; l < k; ++l) {
        const double d = squared_distance(points[i], centers[l]);
        if (d < best_d) {
          best_d = d;
          best = l;
        }
      }
      if (label[i] != best) {
        label[i] = best;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<Rgb> sums(k, Rgb{0, 0, 0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      for (int c = 0; c < 3; ++c) sums[label[i]][c] += points[i][c];
      ++counts[label[i]];
    }
    for (int l = 0; l < k; ++l) {
      if (counts[l] == 0) {
        // Re-seed an empty cluster at the point farthest from its centre.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = squared_distance(points[i], centers[label[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers[l] = points[far];
        label[far] = l;
        continue;
      }
      for (int c = 0; c < 3; ++c) centers[l][c] = sums[l][c] / static_cast<double>(counts[l]);
    }
  }

  // Final statistics from the last assignment.
  std::vector<Rgb> mean(k, Rgb{0, 0, 0}), sq(k, Rgb{0, 0, 0});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int c = 0; c < 3; ++c) mean[label[i]][c] += points[i][c];
    ++counts[label[i]];
  }
  for (int l = 0; l < k; ++l) {
    if (counts[l] == 0) throw DegenerateClusters("k-means left an empty cluster");
    for (int c = 0; c < 3; ++c) mean[l][c] /= static_cast<double>(counts[l]);
  }
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = points[i][c] - mean[label[i]][c];
      sq[label[i]][c] += d * d;
    }

  std::vector<int> order(k);
  for (int l = 0; l < k; ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return luminance(mean[a]) < luminance(mean[b]); });

  Palette palette;
  for (int l : order) {
    palette.centers.push_back(mean[l]);
    Rgb spread;
    for (int c = 0; c < 3; ++c)
      spread[c] = std::max(kSpreadFloor, std::sqrt(sq[l][c] / static_cast<double>(counts[l])));
    palette.spreads.push_back(spread);
  }
  palette.validate();
  return palette;
}

void soft_assign(const Rgb& pixel, const Palette& palette, std::span<double> weights) {
  for (int l = 0; l < palette.k(); ++l) {
    double e = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = (pixel[i] - palette.centers[l][i]) / palette.spreads[l][i];
      e += d * d;
    }
    weights[l] = std::exp(-e);
  }
}

std::vector<double> soft_assign(const Rgb& pixel, const Palette& palette) {
  std::vector<double> w(palette.k());
  soft_assign(pixel, palette, w);
  return w;
}

int nearest_cluster(const Rgb& pixel, const Palette& palette) {
  int best = 0;
  double best_e = std::numeric_limits<double>::infinity();
  for (int l = 0; l < palette.k(); ++l) {
    double e = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = (pixel[i] - palette.centers[l][i]) / palette.spreads[l][i];
      e += d * d;
    }
    if (e < best_e) {
      best_e = e;
      best = l;
    }
  }
  return best;
}

}  // namespace cooctex
