#include "cooctex/cooc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cooctex/error.hpp"

namespace cooctex {

namespace {

// One displacement q - p of the half window. The other half follows from
// symmetry: the pair (p, p + d) seen from q is (q, q - d).
struct Offset {
  int dy;
  int dx;
  double weight;
};

std::vector<Offset> half_window(const CoocParams& params) {
  const int r = params.window_size / 2;
  std::vector<Offset> offsets;
  offsets.reserve(static_cast<std::size_t>(r + 1) * (2 * r + 1));
  for (int dy = 0; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dy == 0 && dx < 0) continue;
      double w = std::exp(-static_cast<double>(dy * dy + dx * dx) / (2.0 * params.sigma_sq));
      // The symmetric pair product below counts (p, p) twice.
      if (dy == 0 && dx == 0) w *= 0.5;
      offsets.push_back({dy, dx, w});
    }
  }
  return offsets;
}

// Half-open index ranges along one axis, one entry per position.
struct AxisRanges {
  std::vector<int> begin;
  std::vector<int> end;
};

// For every centre c: the positions p with both p and p + d inside the
// clamped patch [max(0, c - r), min(n - 1, c + r)].
AxisRanges pair_ranges(int n, int radius, int d) {
  AxisRanges out{std::vector<int>(n), std::vector<int>(n)};
  for (int c = 0; c < n; ++c) {
    const int lo = std::max(0, c - radius);
    const int hi = std::min(n - 1, c + radius);
    const int b = std::max(lo, lo - d);
    const int e = std::min(hi, hi - d) + 1;
    out.begin[c] = b;
    out.end[c] = std::max(b, e);
  }
  return out;
}

// For every position p: the centres whose patch holds both p and p + d.
AxisRanges centre_ranges(int n, int radius, int d) {
  AxisRanges out{std::vector<int>(n), std::vector<int>(n)};
  for (int p = 0; p < n; ++p) {
    const int q = p + d;
    if (q < 0 || q >= n) {
      out.begin[p] = out.end[p] = 0;
      continue;
    }
    const int b = std::max(0, std::max(p, q) - radius);
    const int e = std::min(n - 1, std::min(p, q) + radius) + 1;
    out.begin[p] = b;
    out.end[p] = std::max(b, e);
  }
  return out;
}

// Summed-area table with a zero border row and column.
class Integral {
 public:
  Integral(int height, int width)
      : width_(width), stride_(width + 1),
        table_(static_cast<std::size_t>(height + 1) * (width + 1), 0.0) {}

  // Rebuilds from a dense row-major (height x width) buffer.
  void build(const double* values, int height) {
    for (int y = 0; y < height; ++y) {
      const double* src = values + static_cast<std::size_t>(y) * width_;
      const double* above = row(y);
      double* out = row(y + 1);
      double run = 0.0;
      out[0] = 0.0;
      for (int x = 0; x < width_; ++x) {
        run += src[x];
        out[x + 1] = above[x + 1] + run;
      }
    }
  }

  double box(int y0, int y1, int x0, int x1) const {
    const double* r0 = row(y0);
    const double* r1 = row(y1);
    return r1[x1] - r0[x1] - r1[x0] + r0[x0];
  }

  const double* row(int y) const { return table_.data() + static_cast<std::size_t>(y) * stride_; }
  double* row(int y) { return table_.data() + static_cast<std::size_t>(y) * stride_; }

 private:
  int width_;
  int stride_;
  std::vector<double> table_;
};

struct PairIndex {
  int a;
  int b;
};

std::vector<PairIndex> unordered_pairs(int k) {
  std::vector<PairIndex> pairs;
  for (int a = 0; a < k; ++a)
    for (int b = a; b < k; ++b) pairs.push_back({a, b});
  return pairs;
}

// Valid p for displacement d on an axis of length n: p and p + d in range.
inline int valid_begin(int d) { return std::max(0, -d); }
inline int valid_end(int n, int d) { return std::min(n, n - d); }

// Fills `out` (height x width) with A_a(p) A_b(p+d) + A_b(p) A_a(p+d) inside
// the valid region and zero elsewhere.
void symmetric_product(const double* map_a, const double* map_b, int height, int width,
                       const Offset& off, double* out) {
  std::fill(out, out + static_cast<std::size_t>(height) * width, 0.0);
  const int y0 = valid_begin(off.dy), y1 = valid_end(height, off.dy);
  const int x0 = valid_begin(off.dx), x1 = valid_end(width, off.dx);
  const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(off.dy) * width + off.dx;
  for (int y = y0; y < y1; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * width;
    for (int x = x0; x < x1; ++x) {
      const std::size_t p = row + x;
      out[p] = map_a[p] * map_b[p + shift] + map_b[p] * map_a[p + shift];
    }
  }
}

// Unnormalised symmetric pair sums X[pair][c] for the clamped patch around
// every centre c. U(a,b) = U(b,a) = X[pair(a,b)].
std::vector<double> pair_sums_per_centre(const std::vector<double>& maps, int height,
                                         int width, int k, const CoocParams& params) {
  const auto pairs = unordered_pairs(k);
  const auto offsets = half_window(params);
  const int radius = params.patch_size / 2;
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  std::vector<double> sums(pairs.size() * plane, 0.0);
  std::vector<double> product(plane);
  Integral integral(height, width);

  for (const Offset& off : offsets) {
    const AxisRanges ys = pair_ranges(height, radius, off.dy);
    const AxisRanges xs = pair_ranges(width, radius, off.dx);
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      const double* map_a = maps.data() + pairs[pi].a * plane;
      const double* map_b = maps.data() + pairs[pi].b * plane;
      symmetric_product(map_a, map_b, height, width, off, product.data());
      integral.build(product.data(), height);
      double* acc = sums.data() + pi * plane;
      for (int cy = 0; cy < height; ++cy) {
        const double* r0 = integral.row(ys.begin[cy]);
        const double* r1 = integral.row(ys.end[cy]);
        double* out = acc + static_cast<std::size_t>(cy) * width;
        for (int cx = 0; cx < width; ++cx) {
          const int xb = xs.begin[cx], xe = xs.end[cx];
          out[cx] += off.weight * (r1[xe] - r0[xe] - r1[xb] + r0[xb]);
        }
      }
    }
  }
  return sums;
}

// Unnormalised symmetric pair sums over every pair of a whole patch.
std::vector<double> pair_sums_whole(const std::vector<double>& maps, int height, int width,
                                    int k, const CoocParams& params) {
  const auto pairs = unordered_pairs(k);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<double> sums(pairs.size(), 0.0);
  for (const Offset& off : half_window(params)) {
    const int y0 = valid_begin(off.dy), y1 = valid_end(height, off.dy);
    const int x0 = valid_begin(off.dx), x1 = valid_end(width, off.dx);
    if (y0 >= y1 || x0 >= x1) continue;
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(off.dy) * width + off.dx;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      const double* ma = maps.data() + pairs[pi].a * plane;
      const double* mb = maps.data() + pairs[pi].b * plane;
      double s = 0.0;
      for (int y = y0; y < y1; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * width;
        for (int x = x0; x < x1; ++x) {
          const std::size_t p = row + x;
          s += ma[p] * mb[p + shift] + mb[p] * ma[p + shift];
        }
      }
      sums[pi] += off.weight * s;
    }
  }
  return sums;
}

void check_rgb(std::span<const double> rgb, int height, int width) {
  if (height <= 0 || width <= 0)
    throw InvalidArgument("image must be non-empty");
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3)
    throw ShapeMismatch("rgb buffer size does not match " + std::to_string(height) + "x" +
                        std::to_string(width) + "x3");
}

// Expands symmetric pair sums of one centre into a normalised k x k cell.
// Returns Z.
double normalise_cell(const std::vector<double>& sums, std::size_t stride, std::size_t centre,
                      const std::vector<PairIndex>& pairs, int k, double* cell) {
  // Summed-area differences can leave ~1e-20 negatives where the true sum is 0.
  auto at = [&](std::size_t pi) { return std::max(0.0, sums[pi * stride + centre]); };
  double z = 0.0;
  for (std::size_t pi = 0; pi < pairs.size(); ++pi)
    z += pairs[pi].a == pairs[pi].b ? at(pi) : 2.0 * at(pi);
  const double inv = 1.0 / std::max(z, kZFloor);
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    const double v = at(pi) * inv;
    cell[pairs[pi].a * k + pairs[pi].b] = v;
    cell[pairs[pi].b * k + pairs[pi].a] = v;
  }
  return z;
}

}  // namespace

void CoocParams::validate() const {
  if (patch_size < 1 || patch_size % 2 == 0)
    throw InvalidArgument("patch_size must be odd and positive, got " +
                          std::to_string(patch_size));
  if (window_size < 1 || window_size % 2 == 0)
    throw InvalidArgument("window_size must be odd and positive, got " +
                          std::to_string(window_size));
  if (!(sigma_sq > 0.0) || !std::isfinite(sigma_sq))
    throw InvalidArgument("sigma_sq must be positive");
}

CoocMatrix::CoocMatrix(int k) : k_(k), values_(static_cast<std::size_t>(k) * k, 0.0) {}

CoocMatrix::CoocMatrix(int k, std::vector<double> values) : k_(k), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(k) * k)
    throw ShapeMismatch("matrix needs k*k values");
}

double CoocMatrix::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

double CoocMatrix::asymmetry() const {
  double worst = 0.0;
  for (int a = 0; a < k_; ++a)
    for (int b = a + 1; b < k_; ++b)
      worst = std::max(worst, std::abs((*this)(a, b) - (*this)(b, a)));
  return worst;
}

CoocGrid::CoocGrid(int height, int width, int k)
    : height_(height), width_(width), k_(k),
      values_(static_cast<std::size_t>(height) * width * k * k, 0.0) {}

CoocGrid::CoocGrid(int height, int width, int k, std::vector<double> values)
    : height_(height), width_(width), k_(k), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(height) * width * k * k)
    throw ShapeMismatch("grid needs height*width*k*k values");
}

std::span<double> CoocGrid::cell(int y, int x) {
  const std::size_t c = channels();
  return {values_.data() + (static_cast<std::size_t>(y) * width_ + x) * c, c};
}

std::span<const double> CoocGrid::cell(int y, int x) const {
  const std::size_t c = channels();
  return {values_.data() + (static_cast<std::size_t>(y) * width_ + x) * c, c};
}

CoocMatrix CoocGrid::matrix(int y, int x) const {
  auto c = cell(y, x);
  return CoocMatrix(k_, std::vector<double>(c.begin(), c.end()));
}

void CoocGrid::set_matrix(int y, int x, const CoocMatrix& m) {
  if (m.k() != k_) throw ShapeMismatch("matrix k does not match grid k");
  std::copy(m.values().begin(), m.values().end(), cell(y, x).begin());
}

CoocMatrix CoocGrid::mean_matrix() const {
  CoocMatrix m(k_);
  if (cell_count() == 0) return m;
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) {
      auto c = cell(y, x);
      for (std::size_t i = 0; i < c.size(); ++i) m.values()[i] += c[i];
    }
  for (double& v : m.values()) v /= static_cast<double>(cell_count());
  return m;
}

CoocTensor CoocTensor::from_matrix(const CoocMatrix& m, int scale) {
  CoocTensor t(1, 1, m.k(), scale);
  t.set_matrix(0, 0, m);
  return t;
}

double l1_distance(const CoocGrid& a, const CoocGrid& b) {
  if (!a.same_shape(b)) throw ShapeMismatch("l1_distance: grid shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
  return s;
}

double l1_distance(const CoocMatrix& a, const CoocMatrix& b) {
  if (a.k() != b.k()) throw ShapeMismatch("l1_distance: matrix sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) s += std::abs(a.values()[i] - b.values()[i]);
  return s;
}

std::vector<double> assignment_maps(std::span<const double> rgb, int height, int width,
                                    const Palette& palette) {
  check_rgb(rgb, height, width);
  const int k = palette.k();
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<double> maps(k * plane);
  std::vector<double> weights(k);
  for (std::size_t p = 0; p < plane; ++p) {
    soft_assign({rgb[3 * p], rgb[3 * p + 1], rgb[3 * p + 2]}, palette, weights);
    for (int l = 0; l < k; ++l) maps[l * plane + p] = weights[l];
  }
  return maps;
}

CoocMatrix cooc_matrix(const Image& patch, const Palette& palette, const CoocParams& params) {
  const auto rgb = patch.to_double();
  return cooc_matrix(rgb, patch.height(), patch.width(), palette, params);
}

CoocMatrix cooc_matrix(std::span<const double> rgb, int height, int width,
                       const Palette& palette, const CoocParams& params) {
  params.validate();
  check_rgb(rgb, height, width);
  if (height < 2 || width < 2) throw InvalidArgument("patch must be at least 2x2");
  const int k = palette.k();
  const auto maps = assignment_maps(rgb, height, width, palette);
  const auto sums = pair_sums_whole(maps, height, width, k, params);
  CoocMatrix m(k);
  const double z = normalise_cell(sums, 1, 0, unordered_pairs(k), k, m.values().data());
  if (z < kZFloor)
    throw DegenerateStatistics("patch has vanishing soft-assignment mass (Z=" +
                               std::to_string(z) + ")");
  return m;
}

CoocVolume cooc_volume(const Image& image, const Palette& palette, const CoocParams& params,
                       ZPolicy policy) {
  const auto rgb = image.to_double();
  return cooc_volume(rgb, image.height(), image.width(), palette, params, policy);
}

CoocVolume cooc_volume(std::span<const double> rgb, int height, int width,
                       const Palette& palette, const CoocParams& params, ZPolicy policy) {
  params.validate();
  check_rgb(rgb, height, width);
  const int k = palette.k();
  const auto pairs = unordered_pairs(k);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const auto maps = assignment_maps(rgb, height, width, palette);
  const auto sums = pair_sums_per_centre(maps, height, width, k, params);

  CoocVolume volume(height, width, k);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t c = static_cast<std::size_t>(y) * width + x;
      const double z = normalise_cell(sums, plane, c, pairs, k, volume.cell(y, x).data());
      if (z < kZFloor && policy == ZPolicy::kThrow)
        throw DegenerateStatistics("vanishing soft-assignment mass at (" + std::to_string(y) +
                                   "," + std::to_string(x) + ")");
    }
  }
  return volume;
}

CoocTensor downsample_volume(const CoocVolume& volume, int s) {
  if (s < 1) throw InvalidArgument("downsampling factor must be >= 1");
  if (volume.height() % s != 0 || volume.width() % s != 0)
    throw InvalidArgument("volume " + std::to_string(volume.height()) + "x" +
                          std::to_string(volume.width()) + " is not divisible by s=" +
                          std::to_string(s));
  const int th = volume.height() / s, tw = volume.width() / s;
  CoocTensor tensor(th, tw, volume.k(), s);
  const double inv = 1.0 / (static_cast<double>(s) * s);
  for (int y = 0; y < volume.height(); ++y)
    for (int x = 0; x < volume.width(); ++x) {
      auto src = volume.cell(y, x);
      auto dst = tensor.cell(y / s, x / s);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    }
  for (double& v : tensor.values()) v *= inv;
  return tensor;
}

CoocTensor cooc_tensor(const Image& image, const Palette& palette, const CoocParams& params,
                       int s, ZPolicy policy) {
  return downsample_volume(cooc_volume(image, palette, params, policy), s);
}

CoocLossResult cooc_l1(std::span<const double> rgb, int height, int width,
                       const CoocTensor& target, const Palette& palette,
                       const CoocParams& params, bool with_grad) {
  params.validate();
  check_rgb(rgb, height, width);
  const int k = palette.k();
  const int s = target.scale();
  if (target.k() != k) throw ShapeMismatch("target tensor k does not match palette");
  if (s < 1 || target.height() * s != height || target.width() * s != width)
    throw ShapeMismatch("crop " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not scale x target tensor " + std::to_string(target.height()) +
                        "x" + std::to_string(target.width()) + " (s=" + std::to_string(s) +
                        ")");

  const auto pairs = unordered_pairs(k);
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const std::size_t kk = static_cast<std::size_t>(k) * k;
  const auto maps = assignment_maps(rgb, height, width, palette);
  const auto sums = pair_sums_per_centre(maps, height, width, k, params);

  // Per-centre normalised matrices and their normalising factors.
  std::vector<double> cells(plane * kk);
  std::vector<double> z(plane);
  for (std::size_t c = 0; c < plane; ++c)
    z[c] = normalise_cell(sums, plane, c, pairs, k, cells.data() + c * kk);

  CoocTensor generated(target.height(), target.width(), k, s);
  const double block = 1.0 / (static_cast<double>(s) * s);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double* src = cells.data() + (static_cast<std::size_t>(y) * width + x) * kk;
      auto dst = generated.cell(y / s, x / s);
      for (std::size_t i = 0; i < kk; ++i) dst[i] += src[i] * block;
    }

  CoocLossResult result;
  for (std::size_t i = 0; i < generated.values().size(); ++i)
    result.loss += std::abs(generated.values()[i] - target.values()[i]);
  if (!with_grad) return result;

  // d loss / d pair sum, per centre.
  std::vector<double> grad_sums(pairs.size() * plane, 0.0);
  std::vector<double> grad_cell(kk);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t c = static_cast<std::size_t>(y) * width + x;
      auto gen = generated.cell(y / s, x / s);
      auto tgt = target.cell(y / s, x / s);
      const double* m = cells.data() + c * kk;
      double dot = 0.0;
      for (std::size_t i = 0; i < kk; ++i) {
        const double d = gen[i] - tgt[i];
        grad_cell[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * block;
        dot += grad_cell[i] * m[i];
      }
      // M = U / Z with Z = sum U; below the floor Z is a constant.
      const bool floored = z[c] < kZFloor;
      const double inv_z = 1.0 / (floored ? kZFloor : z[c]);
      const double shift = floored ? 0.0 : dot;
      for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const int a = pairs[pi].a, b = pairs[pi].b;
        double g = grad_cell[a * k + b] - shift;
        if (a != b) g += grad_cell[b * k + a] - shift;
        grad_sums[pi * plane + c] = g * inv_z;
      }
    }
  }

  // Back through the box sums: each p collects the gradient of every centre
  // whose patch contains both ends of the pair.
  std::vector<Integral> grad_tables;
  grad_tables.reserve(pairs.size());
  for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
    grad_tables.emplace_back(height, width);
    grad_tables.back().build(grad_sums.data() + pi * plane, height);
  }

  const int radius = params.patch_size / 2;
  std::vector<double> grad_maps(k * plane, 0.0);
  std::vector<double> q_row(width);
  for (const Offset& off : half_window(params)) {
    const AxisRanges ys = centre_ranges(height, radius, off.dy);
    const AxisRanges xs = centre_ranges(width, radius, off.dx);
    const int y0 = valid_begin(off.dy), y1 = valid_end(height, off.dy);
    const int x0 = valid_begin(off.dx), x1 = valid_end(width, off.dx);
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(off.dy) * width + off.dx;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      const int a = pairs[pi].a, b = pairs[pi].b;
      const Integral& table = grad_tables[pi];
      for (int y = y0; y < y1; ++y) {
        const double* r0 = table.row(ys.begin[y]);
        const double* r1 = table.row(ys.end[y]);
        for (int x = x0; x < x1; ++x) {
          const int xb = xs.begin[x], xe = xs.end[x];
          q_row[x] = off.weight * (r1[xe] - r0[xe] - r1[xb] + r0[xb]);
        }
        const std::size_t p = static_cast<std::size_t>(y) * width + x0;
        const int n = x1 - x0;
        const double* __restrict q = q_row.data() + x0;
        const double* __restrict ma_p = maps.data() + a * plane + p;
        const double* __restrict mb_p = maps.data() + b * plane + p;
        const double* __restrict ma_q = ma_p + shift;
        const double* __restrict mb_q = mb_p + shift;
        if (a == b) {
          double* __restrict g_p = grad_maps.data() + a * plane + p;
          for (int i = 0; i < n; ++i) g_p[i] += 2.0 * q[i] * ma_q[i];
          double* __restrict g_q = grad_maps.data() + a * plane + p + shift;
          for (int i = 0; i < n; ++i) g_q[i] += 2.0 * q[i] * ma_p[i];
        } else {
          double* __restrict ga_p = grad_maps.data() + a * plane + p;
          double* __restrict gb_p = grad_maps.data() + b * plane + p;
          for (int i = 0; i < n; ++i) {
            ga_p[i] += q[i] * mb_q[i];
            gb_p[i] += q[i] * ma_q[i];
          }
          double* __restrict ga_q = ga_p + shift;
          double* __restrict gb_q = gb_p + shift;
          for (int i = 0; i < n; ++i) {
            gb_q[i] += q[i] * ma_p[i];
            ga_q[i] += q[i] * mb_p[i];
          }
        }
      }
    }
  }

  // Soft assignment: dA_l/dI_i = -2 A_l (I_i - c_li) / s_li^2.
  result.pixel_grad.assign(plane * 3, 0.0);
  for (int l = 0; l < k; ++l) {
    const Rgb& centre = palette.centers[l];
    const Rgb& spread = palette.spreads[l];
    const double* am = maps.data() + l * plane;
    const double* gm = grad_maps.data() + l * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const double ga = gm[p] * am[p];
      if (ga == 0.0) continue;
      for (int i = 0; i < 3; ++i)
        result.pixel_grad[3 * p + i] +=
            ga * (-2.0 * (rgb[3 * p + i] - centre[i]) / (spread[i] * spread[i]));
    }
  }
  return result;
}

}  // namespace cooctex
