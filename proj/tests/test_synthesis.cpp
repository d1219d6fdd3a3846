#include "support/torch_doctest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cooctex/error.hpp"
#include "cooctex/nn/evaluation.hpp"
#include "cooctex/nn/synthesis.hpp"
#include "cooctex/stats_bundle.hpp"
#include "support/oracles.hpp"
#include "support/tiny_model.hpp"

using namespace cooctex;
using namespace cooctex::nn;
namespace fs = std::filesystem;

namespace {

/// Symmetric, non-negative, unit-sum matrices in every cell.
CoocTensor random_tensor(int h, int w, int k, std::uint64_t seed, int scale = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  CoocTensor t(h, w, k, scale);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      CoocMatrix m(k);
      double sum = 0;
      for (int a = 0; a < k; ++a)
        for (int b = a; b < k; ++b) {
          const double v = u(rng);
          m(a, b) = m(b, a) = v;
          sum += a == b ? v : 2 * v;
        }
      for (double& v : m.values()) v /= sum;
      t.set_matrix(y, x, m);
    }
  return t;
}

CoocMatrix matrix2(double a, double b, double c, double d) { return CoocMatrix(2, {a, b, c, d}); }

void check_matrix(const CoocMatrix& got, const CoocMatrix& want, double tol) {
  REQUIRE(got.k() == want.k());
  for (std::size_t i = 0; i < got.values().size(); ++i)
    CHECK(std::abs(got.values()[i] - want.values()[i]) <= tol);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("interpolation endpoints, fixed points and extrapolation") {
  const CoocTensor a = random_tensor(2, 3, 2, 1);
  const CoocTensor b = random_tensor(2, 3, 2, 2);
  CHECK(interpolate_tensors(a, b, 0.0) == a);
  CHECK(interpolate_tensors(a, b, 1.0) == b);
  const CoocTensor same = interpolate_tensors(a, a, 0.37);
  CHECK(l1_distance(same, a) <= 1e-12);
  const CoocTensor mid = interpolate_tensors(a, b, 0.5);
  for (std::size_t i = 0; i < mid.values().size(); ++i)
    CHECK(mid.values()[i] == doctest::Approx(0.5 * (a.values()[i] + b.values()[i])).epsilon(1e-12));

  // Hand-computed: 1.5 * b - 0.5 * a = [[-0.1, 0.2], [0.2, 0.7]] -> clamp -> /1.1.
  const CoocTensor ma = CoocTensor::from_matrix(matrix2(0.5, 0.2, 0.2, 0.1));
  const CoocTensor mb = CoocTensor::from_matrix(matrix2(0.1, 0.2, 0.2, 0.5));
  const CoocMatrix extrapolated = interpolate_tensors(ma, mb, 1.5).matrix(0, 0);
  check_matrix(extrapolated, matrix2(0.0, 0.2 / 1.1, 0.2 / 1.1, 0.7 / 1.1), 1e-12);

  CHECK_THROWS_AS(interpolate_tensors(a, random_tensor(2, 2, 2, 3), 0.5), ShapeMismatch);
  CHECK_THROWS_AS(interpolate_tensors(ma, mb, std::nan("")), InvalidArgument);
}

TEST_CASE("bin edit: hand example, identity, round trip and argument checks") {
  const CoocMatrix m = matrix2(0.5, 0.2, 0.2, 0.1);
  check_matrix(edit_bin(m, 0, 1, 2.0), matrix2(0.5 / 1.4, 0.4 / 1.4, 0.4 / 1.4, 0.1 / 1.4), 1e-12);
  check_matrix(edit_bin(m, 1, 0, 2.0), edit_bin(m, 0, 1, 2.0), 0.0);
  check_matrix(edit_bin(m, 0, 0, 3.0), matrix2(1.5 / 2.0, 0.2 / 2.0, 0.2 / 2.0, 0.1 / 2.0), 1e-12);
  CHECK(edit_bin(m, 0, 1, 1.0) == m);
  check_matrix(edit_bin(edit_bin(m, 1, 1, 5.0), 1, 1, 0.2), m, 1e-12);

  CHECK_THROWS_AS(edit_bin(m, 2, 0, 2.0), InvalidArgument);
  CHECK_THROWS_AS(edit_bin(m, -1, 0, 2.0), InvalidArgument);
  CHECK_THROWS_AS(edit_bin(m, 0, 1, -1.0), InvalidArgument);
  CHECK_THROWS_AS(edit_bin(m, 0, 1, std::nan("")), InvalidArgument);
  CHECK_THROWS_AS(edit_bin(matrix2(0, 0.5, 0.5, 0), 0, 1, 0.0), InvalidArgument);

  const CoocTensor t = random_tensor(2, 2, 2, 4);
  const CoocTensor one = edit_tensor_bin(t, 0, 1, 3.0, std::pair{1, 0});
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      if (y == 1 && x == 0)
        check_matrix(one.matrix(y, x), edit_bin(t.matrix(y, x), 0, 1, 3.0), 0.0);
      else
        CHECK(one.matrix(y, x) == t.matrix(y, x));
    }
  const CoocTensor all = edit_tensor_bin(t, 0, 1, 3.0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) check_matrix(all.matrix(y, x), edit_bin(t.matrix(y, x), 0, 1, 3.0), 0.0);
  CHECK_THROWS_AS(edit_tensor_bin(t, 0, 1, 3.0, std::pair{2, 0}), InvalidArgument);
}

TEST_CASE("bin edits keep the matrix a symmetric distribution") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> bin(0, 3);
  std::uniform_real_distribution<double> log_factor(-3.0, 3.0);
  int bad = 0;
  for (int i = 0; i < 200; ++i) {
    const CoocMatrix m = random_tensor(1, 1, 4, 100 + i).matrix(0, 0);
    const int a = bin(rng), b = bin(rng);
    const double f = std::exp(log_factor(rng));
    const CoocMatrix e = edit_bin(m, a, b, f);
    const CoocMatrix back = edit_bin(e, a, b, 1.0 / f);
    if (std::abs(e.sum() - 1) > 1e-9 || e.asymmetry() > 1e-12 || l1_distance(back, m) > 1e-9) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("layout parsing and validation") {
  TempDir dir("cooctex_layout_test");
  save_tensor(random_tensor(1, 1, 2, 1), dir.path / "a.ctxt");
  save_tensor(random_tensor(1, 1, 2, 2), dir.path / "b.ctxt");

  const CoocLayout layout = CoocLayout::parse(
      "# two regions\ncell = 2\nA = a.ctxt\nB = b.ctxt   # trailing comment\ngrid:\nAAB\nABB\n",
      dir.path);
  CHECK(layout.rows() == 2);
  CHECK(layout.cols() == 3);
  CHECK(layout.height() == 4);
  CHECK(layout.width() == 6);
  CHECK(layout.symbol_at(0, 5) == 'B');
  CHECK(layout.symbol_at(3, 0) == 'A');

  {
    std::ofstream(dir.path / "layout.txt") << "A = a.ctxt\ngrid:\nAA\n";
  }
  const CoocLayout loaded = CoocLayout::load(dir.path / "layout.txt");
  CHECK(loaded.width() == 2);

  CHECK_THROWS_AS(CoocLayout::parse("A = a.ctxt\ngrid:\nAB\n", dir.path), InvalidArgument);
  CHECK_THROWS_AS(CoocLayout::parse("A = a.ctxt\ngrid:\nAA\nA\n", dir.path), InvalidArgument);
  CHECK_THROWS_AS(CoocLayout::parse("A = a.ctxt\ngrid:\nA A\n", dir.path), InvalidArgument);
  CHECK_THROWS_AS(CoocLayout::parse("A = a.ctxt\nA = b.ctxt\ngrid:\nA\n", dir.path), InvalidArgument);
  CHECK_THROWS_AS(CoocLayout::parse("A = a.ctxt\n", dir.path), InvalidArgument);
  CHECK_THROWS_AS(CoocLayout::parse("cell = 0\nA = a.ctxt\ngrid:\nA\n", dir.path), InvalidArgument);
  CHECK_THROWS(CoocLayout::parse("A = missing.ctxt\ngrid:\nA\n", dir.path));
  std::map<char, CoocTensor> mixed{{'A', random_tensor(1, 1, 2, 1)}, {'B', random_tensor(1, 1, 4, 1)}};
  CHECK_THROWS_AS(CoocLayout({"AB"}, mixed, 1), ShapeMismatch);
}

TEST_CASE("layout assembly tiles regions and blends only near borders") {
  const CoocTensor a = random_tensor(2, 2, 2, 5);
  const CoocTensor b = random_tensor(1, 1, 2, 6);
  const CoocLayout layout({"AAAB"}, {{'A', a}, {'B', b}}, 3);
  const CoocTensor hard = layout.assemble(0);
  CHECK(hard.height() == 3);
  CHECK(hard.width() == 12);
  CHECK(hard.matrix(2, 4) == a.matrix(0, 0));  // periodic tiling in tensor cells
  CHECK(hard.matrix(1, 3) == a.matrix(1, 1));
  CHECK(hard.matrix(0, 10) == b.matrix(0, 0));

  const CoocTensor soft = layout.assemble(1);
  CHECK(soft.matrix(1, 4) == hard.matrix(1, 4));  // far from the border
  // Cell 9 sees columns 8..10: one A column and two B columns; each region
  // contributes its own tiled matrix at that cell.
  const CoocMatrix want_a = a.matrix(1, 1), want_b = b.matrix(0, 0);
  for (int i = 0; i < 4; ++i) {
    const double expected = (want_a.values()[i] + 2 * want_b.values()[i]) / 3.0;
    CHECK(soft.matrix(1, 9).values()[i] == doctest::Approx(expected).epsilon(1e-12));
  }
  for (int y = 0; y < soft.height(); ++y)
    for (int x = 0; x < soft.width(); ++x) CHECK(soft.matrix(y, x).sum() == doctest::Approx(1.0));
}

TEST_CASE("constant layout large synthesis equals direct synthesis") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 3);
  const CoocTensor t = random_tensor(1, 1, 2, 7);
  const CoocLayout layout({"AA", "AA"}, {{'A', t}}, 2);
  const Image large = synth_large(c, layout, 21, 1);
  const Image direct = synthesize(c, layout.assemble(0), 21);
  CHECK(large.height() == 4 * 32);
  CHECK(large.width() == 4 * 32);
  CHECK(large == direct);
}

TEST_CASE("synthesis shapes, determinism and seed dependence") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 4);
  const CoocTensor t = random_tensor(2, 3, 2, 8);
  const Image a = synthesize(c, t, 1);
  CHECK(a.height() == 64);
  CHECK(a.width() == 96);
  CHECK(a == synthesize(c, t, 1));
  CHECK_FALSE(a == synthesize(c, t, 2));
  CHECK(std::all_of(a.data().begin(), a.data().end(), [](float v) { return v >= 0 && v <= 1; }));
  CHECK_THROWS_AS(synthesize(c, random_tensor(1, 1, 4, 1), 1), ShapeMismatch);

  const std::vector<Image> batch = synthesize_batch(c, {t, random_tensor(2, 3, 2, 9)}, {1, 5});
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].height() == 64);
  CHECK(mean_abs_diff(batch[0], a) <= 1e-5);
  CHECK(mean_abs_diff(batch[1], synthesize(c, random_tensor(2, 3, 2, 9), 5)) <= 1e-5);
}

TEST_CASE("an 88 x 44 tensor synthesises a 2816 x 1408 image in one pass") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 5);
  const CoocTensor t = random_tensor(88, 44, 2, 10);
  const Image img = synthesize(c, t, 3);
  CHECK(img.height() == 2816);
  CHECK(img.width() == 1408);
}

TEST_CASE("morph frames share noise and hit both endpoints") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 6);
  MorphSpec spec{random_tensor(1, 2, 2, 11), random_tensor(1, 2, 2, 12), {0.0, 0.25, 0.5, 1.0}, 9};
  const std::vector<Image> frames = morph_sequence(c, spec);
  REQUIRE(frames.size() == 4);
  CHECK(frames.front() == synthesize(c, spec.from, 9));
  CHECK(frames.back() == synthesize(c, spec.to, 9));
  CHECK(frames[1] == synthesize(c, interpolate_tensors(spec.from, spec.to, 0.25), 9));

  TempDir dir("cooctex_frames_test");
  const auto paths = save_frames(frames, dir.path, "morph");
  REQUIRE(paths.size() == 4);
  CHECK(paths[2].filename() == "morph_0002.png");
  CHECK(load_image(paths[3]) == quantize8(frames[3]));
}

TEST_CASE("stability loop records iteration 0 as the one-shot loss") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 7);
  const CoocTensor c0 = random_tensor(1, 2, 2, 13);
  const StabilityTrace trace = stability_loop(c, c0, 4, 3);
  CHECK(trace.distances.size() == 4);
  CHECK(trace.images.size() == 4);
  const double one_shot = l1_distance(c0, measure_tensor(c, synthesize(c, c0, 4)));
  CHECK(trace.distances[0] == doctest::Approx(one_shot).epsilon(1e-12));
  // Iteration 1 is conditioned on what iteration 0 measured.
  const CoocTensor c1 = measure_tensor(c, trace.images[0]);
  CHECK(trace.images[1] == synthesize(c, c1, 4));
  CHECK_THROWS_AS(stability_loop(c, c0, 4, 0), InvalidArgument);

  const StabilityReport report = stability_report(c, {c0, random_tensor(1, 2, 2, 14)}, 5, 2);
  CHECK(report.mean_distance.size() == 3);
  CHECK(report.distances.size() == 2);
  double drift = 0;
  for (double m : report.mean_distance)
    drift = std::max(drift, std::abs(m - report.mean_distance[0]) / report.mean_distance[0]);
  CHECK(report.drift == doctest::Approx(drift).epsilon(1e-12));
  const std::string csv = report.to_csv();
  CHECK(csv.rfind("iteration,mean_l1,relative_to_first,input_0,input_1\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("nearest neighbours agree with an exhaustive oracle") {
  const std::vector<Rgb> colours{{0.1, 0.2, 0.3}, {0.9, 0.8, 0.7}, {0.5, 0.5, 0.1}};
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    std::vector<Image> set;
    for (int i = 0; i < 10; ++i) set.push_back(fixtures::random_image(8, 8, colours, 0.2, trial * 100 + i));
    const Image query = fixtures::random_image(12, 12, colours, 0.2, trial * 100 + 50);
    const Image centre = query.crop(2, 2, 8, 8);
    std::vector<std::pair<double, std::size_t>> naive;
    for (std::size_t i = 0; i < set.size(); ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < centre.data().size(); ++j)
        sum += std::abs(static_cast<double>(centre.data()[j]) - set[i].data()[j]);
      naive.push_back({sum / centre.data().size(), i});
    }
    std::sort(naive.begin(), naive.end());
    const auto got = nearest_neighbors(query, set, NeighborMetric::kRgbL1, 3);
    REQUIRE(got.size() == 3);
    for (int m = 0; m < 3; ++m) {
      CHECK(got[m].index == naive[m].second);
      CHECK(got[m].distance == doctest::Approx(naive[m].first).epsilon(1e-6));
    }
  }

  const Image a = fixtures::checkerboard(8, 8, 2, {0, 0, 0}, {1, 1, 1});
  const Image inverted = fixtures::checkerboard(8, 8, 2, {1, 1, 1}, {0, 0, 0});
  const Image grey(8, 8, 0.5f);
  const auto self = nearest_neighbors(a, {grey, a, inverted}, NeighborMetric::kRgbL1, 3);
  CHECK(self[0].index == 1);
  CHECK(self[0].distance == 0.0);
  CHECK(self[2].index == 2);
  CHECK(self[2].distance == 1.0);

  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 8);
  const Image crop = fixtures::random_image(32, 32, {{0.15, 0.15, 0.2}, {0.85, 0.8, 0.7}}, 0.1, 3);
  const auto by_stats = nearest_neighbors(crop, {Image(32, 32, 0.5f), crop}, NeighborMetric::kCoocL1, 1, &c);
  CHECK(by_stats[0].index == 1);
  CHECK(by_stats[0].distance == 0.0);
  CHECK_THROWS_AS(nearest_neighbors(a, {}, NeighborMetric::kRgbL1, 1), InvalidArgument);
  CHECK_THROWS_AS(nearest_neighbors(a, {a}, NeighborMetric::kCoocL1, 1), InvalidArgument);
  CHECK_THROWS_AS(parse_metric("l2"), InvalidArgument);
  CHECK(parse_metric("cooc_l1") == NeighborMetric::kCoocL1);
}

TEST_CASE("diversity grid layout and determinism") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 9);
  const std::vector<CoocTensor> tensors{random_tensor(1, 1, 2, 1), random_tensor(1, 1, 2, 2),
                                        random_tensor(1, 1, 2, 3)};
  const Image grid = diversity_grid(c, tensors, {1, 2}, 4);
  CHECK(grid.height() == 2 * 32 + 4);
  CHECK(grid.width() == 3 * 32 + 2 * 4);
  CHECK(grid == diversity_grid(c, tensors, {1, 2}, 4));
  const Image cell = grid.crop(36, 72, 32, 32);  // row 1 (seed 2), column 2
  CHECK(mean_abs_diff(cell, synthesize(c, tensors[2], 2)) <= 1e-5);
}

TEST_CASE("fidelity compares against matched and deranged conditions") {
  const ModelCheckpoint c = fixtures::tiny_checkpoint(2, 10);
  std::vector<CoocTensor> tensors;
  for (int i = 0; i < 4; ++i) tensors.push_back(random_tensor(1, 1, 2, 30 + i));
  const FidelityReport r = fidelity(c, tensors, 3);
  CHECK(r.matched == doctest::Approx(mean_cooc_distance(c, tensors, 3)).epsilon(1e-12));
  CHECK(r.shuffled > 0);
  CHECK(r.ratio() == doctest::Approx(r.shuffled / r.matched));
  CHECK_THROWS_AS(fidelity(c, {tensors[0]}, 3), InvalidArgument);
}
