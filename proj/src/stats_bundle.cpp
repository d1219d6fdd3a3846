#include "cooctex/stats_bundle.hpp"

#include <fstream>

#include "cooctex/binary_io.hpp"

namespace cooctex {

namespace {

constexpr io::Magic kStatsMagic{'C', 'T', 'X', 'S', 'T', 'A', 'T', '\0'};
constexpr io::Magic kTensorMagic{'C', 'T', 'X', 'T', 'N', 'S', 'R', '\0'};
constexpr std::uint32_t kTensorVersion = 1;

void put_rgbs(io::Writer& w, const std::vector<Rgb>& v) {
  std::vector<double> flat;
  for (const Rgb& c : v) flat.insert(flat.end(), c.begin(), c.end());
  w.put_array(flat);
}

std::vector<Rgb> get_rgbs(io::Reader& r) {
  const auto flat = r.get_array<double>();
  if (flat.size() % 3 != 0) throw FormatError("colour array length not a multiple of 3");
  std::vector<Rgb> v(flat.size() / 3);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = {flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]};
  return v;
}

}  // namespace

void write_stats(std::ostream& out, const StatsBundle& stats) {
  io::Writer w(out);
  w.magic(kStatsMagic);
  w.put<std::uint32_t>(StatsBundle::kVersion);
  w.put<std::int32_t>(stats.palette.k());
  put_rgbs(w, stats.palette.centers);
  put_rgbs(w, stats.palette.spreads);
  w.put_array(stats.normalizer.mean);
  w.put_array(stats.normalizer.std);
  w.put<std::int32_t>(stats.params.patch_size);
  w.put<std::int32_t>(stats.params.window_size);
  w.put<double>(stats.params.sigma_sq);
  w.put<std::int32_t>(stats.scale);
  w.put<std::uint64_t>(stats.fit_seed);
  w.check();
}

StatsBundle read_stats(std::istream& in) {
  io::Reader r(in);
  r.expect_magic(kStatsMagic, "stats bundle");
  const auto version = r.get<std::uint32_t>();
  if (version != StatsBundle::kVersion)
    throw FormatError("unsupported stats bundle version " + std::to_string(version));
  StatsBundle s;
  const int k = r.get<std::int32_t>();
  s.palette.centers = get_rgbs(r);
  s.palette.spreads = get_rgbs(r);
  if (s.palette.k() != k || static_cast<int>(s.palette.spreads.size()) != k)
    throw FormatError("palette size does not match k");
  s.normalizer.mean = r.get_array<double>();
  s.normalizer.std = r.get_array<double>();
  if (s.normalizer.mean.size() != s.normalizer.std.size())
    throw FormatError("normalizer mean/std length mismatch");
  s.params.patch_size = r.get<std::int32_t>();
  s.params.window_size = r.get<std::int32_t>();
  s.params.sigma_sq = r.get<double>();
  s.scale = r.get<std::int32_t>();
  s.fit_seed = r.get<std::uint64_t>();
  return s;
}

void save_stats(const StatsBundle& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_stats(out, stats);
}

StatsBundle load_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_stats(in);
}

void write_tensor(std::ostream& out, const CoocTensor& tensor) {
  io::Writer w(out);
  w.magic(kTensorMagic);
  w.put<std::uint32_t>(kTensorVersion);
  w.put<std::int32_t>(tensor.height());
  w.put<std::int32_t>(tensor.width());
  w.put<std::int32_t>(tensor.k());
  w.put<std::int32_t>(tensor.scale());
  w.put_array(std::vector<double>(tensor.values().begin(), tensor.values().end()));
  w.check();
}

CoocTensor read_tensor(std::istream& in) {
  io::Reader r(in);
  r.expect_magic(kTensorMagic, "tensor");
  const auto version = r.get<std::uint32_t>();
  if (version != kTensorVersion)
    throw FormatError("unsupported tensor version " + std::to_string(version));
  const int h = r.get<std::int32_t>();
  const int w = r.get<std::int32_t>();
  const int k = r.get<std::int32_t>();
  const int s = r.get<std::int32_t>();
  if (h < 0 || w < 0 || k < 1 || s < 1) throw FormatError("bad tensor header");
  auto values = r.get_array<double>();
  if (values.size() != static_cast<std::size_t>(h) * w * k * k)
    throw FormatError("tensor payload does not match its header");
  return CoocTensor(h, w, k, s, std::move(values));
}

void save_tensor(const CoocTensor& tensor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_tensor(out, tensor);
}

CoocTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace cooctex
