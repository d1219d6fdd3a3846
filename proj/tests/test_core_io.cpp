#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cooctex/config.hpp"
#include "cooctex/error.hpp"
#include "cooctex/image.hpp"
#include "cooctex/normalizer.hpp"
#include "cooctex/stats_bundle.hpp"
#include "support/oracles.hpp"

using namespace cooctex;

namespace {

CoocTensor random_tensor(int h, int w, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CoocTensor t(h, w, k, 32);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      CoocMatrix m(k);
      double sum = 0;
      for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
          const double v = u(rng);
          m(a, b) = v;
          m(b, a) = v;
          sum += a == b ? v : 2 * v;
        }
      for (double& v : m.values()) v /= sum;
      t.set_matrix(y, x, m);
    }
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("cooctex_test_" + name);
}

}  // namespace

TEST_CASE("normalizer of one constant tensor maps it to zeros") {
  const CoocTensor t = random_tensor(1, 1, 2, 3);
  const std::vector<CoocTensor> one{t};
  const Normalizer n = fit_normalizer(one);
  for (double s : n.std) CHECK(s == kStdFloor);
  const CoocTensor z = n.normalize(t);
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("normalize then denormalize is the identity") {
  std::vector<CoocTensor> ts;
  for (int i = 0; i < 5; ++i) ts.push_back(random_tensor(4, 4, 4, 10 + i));
  const Normalizer n = fit_normalizer(ts);
  const CoocTensor back = n.denormalize(n.normalize(ts[2]));
  for (std::size_t i = 0; i < back.values().size(); ++i)
    CHECK(std::abs(back.values()[i] - ts[2].values()[i]) <= 1e-6);
}

TEST_CASE("two-tensor normalizer matches the direct formula") {
  // Channel values chosen by hand; the matrices need not be normalised here.
  CoocTensor a(1, 1, 2, 1, {0.1, 0.2, 0.2, 0.5});
  CoocTensor b(1, 1, 2, 1, {0.3, 0.1, 0.1, 0.5});
  const std::vector<CoocTensor> ts{a, b};
  const Normalizer n = fit_normalizer(ts);
  CHECK(n.mean[0] == doctest::Approx(0.2));
  CHECK(n.mean[1] == doctest::Approx(0.15));
  CHECK(n.mean[3] == doctest::Approx(0.5));
  CHECK(n.std[0] == doctest::Approx(0.1));
  CHECK(n.std[1] == doctest::Approx(0.05));
  CHECK(n.std[3] == kStdFloor);
}

TEST_CASE("normalised population has zero mean and unit variance") {
  std::vector<CoocTensor> ts;
  for (int i = 0; i < 40; ++i) ts.push_back(random_tensor(4, 4, 2, 100 + i));
  const Normalizer n = fit_normalizer(ts);
  const int c = 4;
  std::vector<double> sum(c, 0), sq(c, 0);
  std::size_t count = 0;
  for (const CoocTensor& t : ts) {
    const CoocTensor z = n.normalize(t);
    for (std::size_t i = 0; i < z.values().size(); ++i) {
      sum[i % c] += z.values()[i];
      sq[i % c] += z.values()[i] * z.values()[i];
    }
    count += t.cell_count();
  }
  for (int ch = 0; ch < c; ++ch) {
    const double mean = sum[ch] / count;
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::abs(sq[ch] / count - mean * mean - 1.0) < 1e-2);
  }
}

TEST_CASE("normalizer rejects empty and mismatched input") {
  CHECK_THROWS_AS(fit_normalizer(std::span<const CoocTensor>{}), InvalidArgument);
  const std::vector<CoocTensor> mixed{random_tensor(1, 1, 2, 1), random_tensor(1, 1, 4, 1)};
  CHECK_THROWS_AS(fit_normalizer(mixed), ShapeMismatch);
  const std::vector<CoocTensor> two{random_tensor(1, 1, 2, 1)};
  CHECK_THROWS_AS(fit_normalizer(two).normalize(random_tensor(1, 1, 4, 2)), ShapeMismatch);
}

TEST_CASE("stats bundle round trip is bit exact") {
  StatsBundle s;
  s.palette = fixtures::palette({{0.1, 0.2, 0.3}, {0.7, 0.71, 0.9}}, 1.0 / 3.0);
  std::vector<CoocTensor> ts{random_tensor(4, 4, 2, 5), random_tensor(4, 4, 2, 6)};
  s.normalizer = fit_normalizer(ts);
  s.params = {33, 9, 8.0 / 3.0};
  s.scale = 32;
  s.fit_seed = 0xfeedbeefcafeull;

  std::stringstream buf;
  write_stats(buf, s);
  const StatsBundle back = read_stats(buf);
  CHECK(back == s);

  const auto path = temp_path("stats.bin");
  save_stats(s, path);
  CHECK(load_stats(path) == s);
  std::filesystem::remove(path);
}

TEST_CASE("stats bundle rejects bad magic and truncation") {
  std::stringstream bad("NOTSTATSxxxxxxxxxxxx");
  CHECK_THROWS_AS(read_stats(bad), FormatError);

  StatsBundle s;
  s.palette = fixtures::palette({{0, 0, 0}, {1, 1, 1}}, 0.2);
  std::stringstream buf;
  write_stats(buf, s);
  const std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_stats(truncated), FormatError);
}

TEST_CASE("tensor file round trip keeps shape, scale and values") {
  const CoocTensor t = random_tensor(3, 5, 4, 77);
  const auto path = temp_path("tensor.bin");
  save_tensor(t, path);
  const CoocTensor back = load_tensor(path);
  CHECK(back == t);
  CHECK(back.scale() == 32);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_tensor(path), Error);
}

TEST_CASE("key-value config parsing, overrides and allow-list") {
  const KeyValueConfig cfg = KeyValueConfig::parse(
      "# comment\n"
      "epochs = 30\n"
      "lr=0.0002   # trailing\n"
      "\n"
      "g_widths = 64, 32,16,8,3\n"
      "sigmoid = true\n");
  CHECK(cfg.get_int("epochs", 0) == 30);
  CHECK(cfg.get_double("lr", 0) == doctest::Approx(0.0002));
  CHECK(cfg.get_int_list("g_widths", {}) == std::vector<int>{64, 32, 16, 8, 3});
  CHECK(cfg.get_bool("sigmoid", false));
  CHECK(cfg.get_int("missing", 7) == 7);

  KeyValueConfig over = cfg;
  over.apply_overrides({"epochs=5", "seed=9"});
  CHECK(over.get_int("epochs", 0) == 5);
  CHECK(over.get_int("seed", 0) == 9);

  CHECK_NOTHROW(over.reject_unknown({"epochs", "lr", "g_widths", "sigmoid", "seed"}));
  CHECK_THROWS_AS(over.reject_unknown({"epochs", "lr"}), InvalidArgument);
  CHECK_THROWS_AS(over.apply_overrides({"novalue"}), InvalidArgument);
  CHECK_THROWS_AS(cfg.get_int("lr", 0), InvalidArgument);
  CHECK_THROWS_AS(KeyValueConfig::parse("just words\n"), InvalidArgument);

  const KeyValueConfig again = KeyValueConfig::parse(over.to_string());
  CHECK(again.values() == over.values());
}

TEST_CASE("png encoding is lossless at 8 bits and deterministic") {
  const Image img = fixtures::random_image(17, 23, {{0.1, 0.5, 0.9}, {0.8, 0.3, 0.2}}, 0.05, 4);
  const auto bytes = encode_png(img);
  CHECK(bytes == encode_png(img));
  const Image back = decode_image(bytes);
  CHECK(back == quantize8(img));
  CHECK(mean_abs_diff(back, img) < 1.0 / 255.0);
}

TEST_CASE("tile_images lays cells out row-major") {
  const Image a(2, 2, 0.0f), b(2, 2, 1.0f);
  const Image grid = tile_images({a, b, b, a}, 2, 2, 1, 0.5f);
  CHECK(grid.height() == 5);
  CHECK(grid.width() == 5);
  CHECK(grid.at(0, 0, 0) == 0.0f);
  CHECK(grid.at(0, 3, 0) == 1.0f);
  CHECK(grid.at(2, 2, 0) == 0.5f);
  CHECK(grid.at(4, 4, 0) == 0.0f);
}
