#include <doctest.h>

#include <cmath>
#include <random>

#include "cooctex/error.hpp"
#include "cooctex/palette.hpp"
#include "support/oracles.hpp"

using namespace cooctex;

TEST_CASE("two-colour image forces the two centres") {
  const Image img = fixtures::checkerboard(16, 16, 2, {0, 0, 0}, {1, 1, 1});
  const Palette p = fit_palette(img, 2, 7);
  REQUIRE(p.k() == 2);
  // Sorted by luminance: black first.
  for (int c = 0; c < 3; ++c) {
    CHECK(p.centers[0][c] == doctest::Approx(0.0));
    CHECK(p.centers[1][c] == doctest::Approx(1.0));
    CHECK(p.spreads[0][c] == doctest::Approx(kSpreadFloor));
  }
}

TEST_CASE("well separated colours are recovered within one 8-bit step") {
  const std::vector<Rgb> colours{{0.1, 0.1, 0.1}, {0.9, 0.2, 0.2}, {0.2, 0.8, 0.3}, {0.9, 0.9, 0.8}};
  const Image img = fixtures::random_image(64, 64, colours, 0.02, 11);

  // Oracle: exact per-colour means of the pixels generated from each colour.
  std::vector<Rgb> sums(4, Rgb{0, 0, 0});
  std::vector<int> counts(4, 0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Rgb px{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
      int best = 0;
      double bd = 1e9;
      for (int l = 0; l < 4; ++l) {
        double d = 0;
        for (int c = 0; c < 3; ++c) d += std::pow(px[c] - colours[l][c], 2);
        if (d < bd) bd = d, best = l;
      }
      for (int c = 0; c < 3; ++c) sums[best][c] += px[c];
      ++counts[best];
    }

  const Palette p = fit_palette(img, 4, 3);
  for (int l = 0; l < 4; ++l) {
    const Rgb mean{sums[l][0] / counts[l], sums[l][1] / counts[l], sums[l][2] / counts[l]};
    double best = 1e9;
    for (const Rgb& c : p.centers) {
      double worst = 0;
      for (int ch = 0; ch < 3; ++ch) worst = std::max(worst, std::abs(c[ch] - mean[ch]));
      best = std::min(best, worst);
    }
    CHECK(best <= 1.0 / 255.0);
  }
}

TEST_CASE("palette fitting is deterministic for a seed") {
  const Image img = fixtures::procedural_texture(0, 64, 64, 5);
  CHECK(fit_palette(img, 4, 99) == fit_palette(img, 4, 99));
}

TEST_CASE("non-standard k is accepted and invalid k rejected") {
  const Image img = fixtures::procedural_texture(2, 48, 48, 1);
  CHECK(fit_palette(img, 3, 1).k() == 3);
  CHECK_THROWS_AS(fit_palette(img, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(fit_palette(img, 17, 1), InvalidArgument);
  CHECK_THROWS_AS(fit_palette(Image{}, 2, 1), InvalidArgument);
}

TEST_CASE("fewer distinct colours than k is a degenerate-cluster error") {
  const Image img = fixtures::checkerboard(8, 8, 1, {0, 0, 0}, {1, 1, 1});
  CHECK_THROWS_AS(fit_palette(img, 4, 1), DegenerateClusters);
}

TEST_CASE("subsampled fit stays close to the full fit") {
  const Image img = fixtures::procedural_texture(1, 128, 128, 2);
  const Palette full = fit_palette(img, 2, 4);
  const Palette sub = fit_palette(img, 2, 4, {.max_iterations = 50, .max_samples = 4000});
  for (int l = 0; l < 2; ++l)
    for (int c = 0; c < 3; ++c) CHECK(std::abs(full.centers[l][c] - sub.centers[l][c]) < 0.02);
}

TEST_CASE("soft assignment values") {
  const Palette p = fixtures::palette({{0.4, 0.5, 0.5}, {0.9, 0.9, 0.9}}, 0.1);
  SUBCASE("pixel on a centre has weight exactly one") {
    CHECK(soft_assign({0.4, 0.5, 0.5}, p)[0] == 1.0);
  }
  SUBCASE("hand evaluation: one spread away on one channel gives exp(-1)") {
    CHECK(soft_assign({0.5, 0.5, 0.5}, p)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  SUBCASE("far pixel has vanishing weights") {
    const Palette tight = fixtures::palette({{0.0, 0.0, 0.0}, {0.1, 0.1, 0.1}}, 0.02);
    for (double w : soft_assign({1.0, 1.0, 1.0}, tight)) CHECK(w < 1e-6);
  }
}

TEST_CASE("argmax of soft assignment is the spread-normalised nearest centre") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Palette p;
    for (int l = 0; l < 4; ++l) {
      p.centers.push_back({u(rng), u(rng), u(rng)});
      p.spreads.push_back({0.05 + 0.3 * u(rng), 0.05 + 0.3 * u(rng), 0.05 + 0.3 * u(rng)});
    }
    const Rgb px{u(rng), u(rng), u(rng)};
    const auto w = soft_assign(px, p);
    const int argmax = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
    CHECK(argmax == nearest_cluster(px, p));
    for (double v : w) {
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("palette validation") {
  Palette p = fixtures::palette({{0, 0, 0}, {1, 1, 1}}, 0.1);
  CHECK_NOTHROW(p.validate());
  p.spreads[1][2] = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p = fixtures::palette({{0, 0, 0}, {0, 0, 0}}, 0.1);
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}
