#include "cooctex/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>

#include "cooctex/binary_io.hpp"
#include "cooctex/error.hpp"
#include "cooctex/normalizer.hpp"
#include "cooctex/palette.hpp"
#include "cooctex/util.hpp"

namespace cooctex {

namespace {

constexpr io::Magic kDatasetMagic{'C', 'T', 'X', 'D', 'A', 'T', 'A', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr int kRedrawAttempts = 100;

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string palette_fingerprint(const Palette& p) {
  std::ostringstream s;
  s.precision(17);
  for (int i = 0; i < p.k(); ++i)
    for (int c = 0; c < 3; ++c) s << p.centers[i][c] << ',' << p.spreads[i][c] << ';';
  return sha256_hex(s.str());
}

std::vector<CoocTensor> compute_tensors(const std::vector<TextureCrop>& crops, const Palette& palette,
                                        const CoocParams& params, int scale) {
  std::vector<CoocTensor> out(crops.size());
  parallel_for(crops.size(), [&](std::size_t i) {
    out[i] = cooc_tensor(crops[i].pixels, palette, params, scale);
  });
  return out;
}

}  // namespace

CropSet extract_crops(const Image& exemplar, int count, int crop_size, double train_fraction,
                      std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("extract_crops: count must be positive");
  if (crop_size < 1) throw InvalidArgument("extract_crops: crop size must be positive");
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw InvalidArgument("extract_crops: train fraction must lie in (0, 1]");
  if (exemplar.height() < crop_size || exemplar.width() < crop_size)
    throw InvalidArgument("extract_crops: exemplar " + std::to_string(exemplar.height()) + "x" +
                          std::to_string(exemplar.width()) + " is smaller than crop size " +
                          std::to_string(crop_size));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_y(0, exemplar.height() - crop_size);
  std::uniform_int_distribution<int> pick_x(0, exemplar.width() - crop_size);
  std::vector<std::pair<int, int>> origins(count);
  for (auto& o : origins) {
    o.first = pick_y(rng);
    o.second = pick_x(rng);
  }

  std::vector<std::size_t> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * count));

  CropSet set;
  std::set<std::pair<int, int>> train_origins;
  for (std::size_t j = 0; j < n_train; ++j) {
    set.train.push_back(order[j]);
    train_origins.insert(origins[order[j]]);
  }
  std::size_t moved = 0;
  for (std::size_t j = n_train; j < order.size(); ++j) {
    auto& o = origins[order[j]];
    for (int attempt = 0; attempt < kRedrawAttempts && train_origins.count(o); ++attempt) {
      o.first = pick_y(rng);
      o.second = pick_x(rng);
    }
    if (train_origins.count(o)) {
      set.train.push_back(order[j]);
      ++moved;
    } else {
      set.test.push_back(order[j]);
    }
  }
  if (moved > 0)
    spdlog::warn("extract_crops: {} test crops had no position disjoint from train; moved to train",
                 moved);
  std::sort(set.train.begin(), set.train.end());
  std::sort(set.test.begin(), set.test.end());

  set.crops.reserve(count);
  for (const auto& [y, x] : origins)
    set.crops.push_back({quantize8(exemplar.crop(y, x, crop_size, crop_size)), y, x});
  return set;
}

KeyValueConfig DatasetManifest::to_config() const {
  KeyValueConfig c;
  c.set("exemplar", exemplar_path);
  c.set("exemplar_sha256", exemplar_sha256);
  c.set("count", std::to_string(count));
  c.set("crop_size", std::to_string(crop_size));
  c.set("train_fraction", format_double(train_fraction));
  c.set("seed", std::to_string(seed));
  c.set("k", std::to_string(k));
  c.set("patch_size", std::to_string(params.patch_size));
  c.set("window_size", std::to_string(params.window_size));
  c.set("sigma_sq", format_double(params.sigma_sq));
  c.set("scale", std::to_string(scale));
  c.set("cache_path", cache_path);
  c.set("cache_key", cache_key);
  return c;
}

DatasetManifest DatasetManifest::from_config(const KeyValueConfig& c) {
  DatasetManifest m;
  m.exemplar_path = c.get_string("exemplar", "");
  m.exemplar_sha256 = c.get_string("exemplar_sha256", "");
  m.count = static_cast<int>(c.get_int("count", 0));
  m.crop_size = static_cast<int>(c.get_int("crop_size", 0));
  m.train_fraction = c.get_double("train_fraction", 0.9);
  m.seed = std::stoull(c.get_string("seed", "0"));
  m.k = static_cast<int>(c.get_int("k", 0));
  m.params.patch_size = static_cast<int>(c.get_int("patch_size", 65));
  m.params.window_size = static_cast<int>(c.get_int("window_size", 51));
  m.params.sigma_sq = c.get_double("sigma_sq", 51.0);
  m.scale = static_cast<int>(c.get_int("scale", 32));
  m.cache_path = c.get_string("cache_path", "");
  m.cache_key = c.get_string("cache_key", "");
  return m;
}

Dataset::Dataset(DatasetManifest manifest, StatsBundle stats, CropSet crops,
                 std::vector<CoocTensor> raw)
    : manifest_(std::move(manifest)),
      stats_(std::move(stats)),
      crops_(std::move(crops)),
      raw_(std::move(raw)) {
  if (raw_.size() != crops_.crops.size())
    throw ShapeMismatch("dataset: one tensor per crop required");
  if (stats_.normalizer.empty()) {
    std::vector<CoocTensor> train;
    for (std::size_t i : crops_.train) train.push_back(raw_[i]);
    stats_.normalizer = fit_normalizer(train);
  }
  normalized_.reserve(raw_.size());
  for (const CoocTensor& t : raw_) normalized_.push_back(stats_.normalizer.normalize(t));
}

std::vector<std::vector<std::size_t>> Dataset::batches(Split split, int batch_size, int epoch,
                                                       bool drop_last) const {
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
  std::vector<std::size_t> order = indices(split);
  std::mt19937_64 rng(derive_seed(manifest_.seed, "batches/" + std::to_string(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    if (drop_last && end - i < static_cast<std::size_t>(batch_size)) break;
    out.emplace_back(order.begin() + i, order.begin() + end);
  }
  return out;
}

std::string dataset_cache_key(const DatasetSpec& spec, const std::string& exemplar_sha256) {
  std::ostringstream s;
  s << "v" << kDatasetVersion << '|' << exemplar_sha256 << '|' << spec.count << '|'
    << spec.crop_size << '|' << format_double(spec.train_fraction) << '|' << spec.seed << '|'
    << spec.k << '|' << spec.params.patch_size << '|' << spec.params.window_size << '|'
    << format_double(spec.params.sigma_sq) << '|' << spec.scale << '|'
    << (spec.palette ? palette_fingerprint(*spec.palette) : "fit");
  return sha256_hex(s.str()).substr(0, 24);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ostringstream payload;
  {
    io::Writer w(payload);
    w.put_string(dataset.manifest().to_config().to_string());
    std::ostringstream stats;
    write_stats(stats, dataset.stats());
    w.put_string(stats.str());
    w.put<std::uint64_t>(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const TextureCrop& c = dataset.crops()[i];
      w.put<std::int32_t>(c.y);
      w.put<std::int32_t>(c.x);
      const auto png = encode_png(c.pixels);
      w.put_string(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      std::ostringstream tensor;
      write_tensor(tensor, dataset.raw(i));
      w.put_string(tensor.str());
    }
    std::vector<std::uint64_t> train(dataset.indices(Split::kTrain).begin(),
                                     dataset.indices(Split::kTrain).end());
    std::vector<std::uint64_t> test(dataset.indices(Split::kTest).begin(),
                                    dataset.indices(Split::kTest).end());
    w.put_array(train);
    w.put_array(test);
  }
  const std::string body = payload.str();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    io::Writer w(out);
    w.magic(kDatasetMagic);
    w.put<std::uint32_t>(kDatasetVersion);
    w.put_string(body);
    w.put_string(sha256_hex(body));
    w.check();
  }
  std::filesystem::rename(tmp, path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  io::Reader r(in);
  r.expect_magic(kDatasetMagic, "dataset cache");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset cache version " + std::to_string(version));
  const std::string body = r.get_string();
  if (r.get_string() != sha256_hex(body)) throw FormatError("dataset cache checksum mismatch");

  std::istringstream payload(body);
  io::Reader p(payload);
  DatasetManifest manifest = DatasetManifest::from_config(KeyValueConfig::parse(p.get_string()));
  std::istringstream stats_in(p.get_string());
  StatsBundle stats = read_stats(stats_in);
  const auto n = p.get<std::uint64_t>();
  CropSet set;
  std::vector<CoocTensor> raw;
  for (std::uint64_t i = 0; i < n; ++i) {
    TextureCrop c;
    c.y = p.get<std::int32_t>();
    c.x = p.get<std::int32_t>();
    const std::string png = p.get_string();
    c.pixels = decode_image(std::span(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
    std::istringstream tensor_in(p.get_string());
    raw.push_back(read_tensor(tensor_in));
    set.crops.push_back(std::move(c));
  }
  for (auto i : p.get_array<std::uint64_t>()) set.train.push_back(i);
  for (auto i : p.get_array<std::uint64_t>()) set.test.push_back(i);
  for (std::size_t i : set.train)
    if (i >= n) throw FormatError("dataset cache: train index out of range");
  for (std::size_t i : set.test)
    if (i >= n) throw FormatError("dataset cache: test index out of range");
  return Dataset(std::move(manifest), std::move(stats), std::move(set), std::move(raw));
}

Dataset build_dataset(const DatasetSpec& spec, const std::filesystem::path& cache_root) {
  spec.params.validate();
  if (spec.crop_size % spec.scale != 0)
    throw InvalidArgument("crop size " + std::to_string(spec.crop_size) +
                          " is not a multiple of the downsampling factor " +
                          std::to_string(spec.scale));
  const std::string hash = sha256_file(spec.exemplar);
  const std::string key = dataset_cache_key(spec, hash);
  const auto cache_path = cache_root / (key + ".ctxdata");
  const auto manifest_path = cache_root / (key + ".manifest");

  if (std::filesystem::exists(cache_path)) {
    try {
      Dataset cached = read_dataset(cache_path);
      if (cached.manifest().cache_key == key && cached.manifest().exemplar_sha256 == hash) {
        spdlog::info("dataset: reusing cache {}", cache_path.string());
        return cached;
      }
      spdlog::warn("dataset: cache {} does not match its inputs; rebuilding", cache_path.string());
    } catch (const Error& e) {
      spdlog::warn("dataset: cache {} is unreadable ({}); rebuilding", cache_path.string(), e.what());
    }
  }

  const Image exemplar = load_image(spec.exemplar);
  StatsBundle stats;
  stats.params = spec.params;
  stats.scale = spec.scale;
  if (spec.palette) {
    spec.palette->validate();
    if (spec.palette->k() != spec.k)
      throw InvalidArgument("supplied palette has k=" + std::to_string(spec.palette->k()) +
                            " but k=" + std::to_string(spec.k) + " was requested");
    stats.palette = *spec.palette;
  } else {
    stats.fit_seed = derive_seed(spec.seed, "palette");
    stats.palette = fit_palette(exemplar, spec.k, stats.fit_seed);
  }

  CropSet set = extract_crops(exemplar, spec.count, spec.crop_size, spec.train_fraction,
                              derive_seed(spec.seed, "crops"));
  spdlog::info("dataset: computing {} co-occurrence tensors", set.crops.size());
  std::vector<CoocTensor> raw = compute_tensors(set.crops, stats.palette, spec.params, spec.scale);

  DatasetManifest manifest;
  manifest.exemplar_path = spec.exemplar.string();
  manifest.exemplar_sha256 = hash;
  manifest.count = spec.count;
  manifest.crop_size = spec.crop_size;
  manifest.train_fraction = spec.train_fraction;
  manifest.seed = spec.seed;
  manifest.k = spec.k;
  manifest.params = spec.params;
  manifest.scale = spec.scale;
  manifest.cache_path = cache_path.string();
  manifest.cache_key = key;

  Dataset dataset(std::move(manifest), std::move(stats), std::move(set), std::move(raw));
  write_dataset(dataset, cache_path);
  dataset.manifest().to_config().save(manifest_path);
  spdlog::info("dataset: wrote {} ({} train / {} test)", cache_path.string(),
               dataset.indices(Split::kTrain).size(), dataset.indices(Split::kTest).size());
  return dataset;
}

}  // namespace cooctex
