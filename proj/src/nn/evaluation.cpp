#include "cooctex/nn/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cooctex/error.hpp"
#include "cooctex/nn/synthesis.hpp"
#include "cooctex/util.hpp"

namespace cooctex::nn {

namespace {

/// Batched synthesis + measurement for a list of tensors, seeds derived per index.
std::vector<CoocTensor> regenerate(const ModelCheckpoint& checkpoint,
                                   const std::vector<CoocTensor>& tensors, std::uint64_t seed) {
  std::vector<CoocTensor> out(tensors.size());
  constexpr std::size_t kChunk = 16;
  for (std::size_t start = 0; start < tensors.size(); start += kChunk) {
    const std::size_t end = std::min(tensors.size(), start + kChunk);
    std::vector<CoocTensor> chunk(tensors.begin() + start, tensors.begin() + end);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = start; i < end; ++i) seeds.push_back(derive_seed(seed, "eval/" + std::to_string(i)));
    const std::vector<Image> images = synthesize_batch(checkpoint, chunk, seeds);
    parallel_for(images.size(), [&](std::size_t j) { out[start + j] = measure_tensor(checkpoint, images[j]); });
  }
  return out;
}

}  // namespace

CoocTensor measure_tensor(const ModelCheckpoint& checkpoint, const Image& image) {
  const StatsBundle& s = checkpoint.stats;
  return cooc_tensor(image, s.palette, s.params, s.scale, ZPolicy::kFloor);
}

StabilityTrace stability_loop(const ModelCheckpoint& checkpoint, const CoocTensor& c0,
                              std::uint64_t seed, int iters) {
  if (iters < 1) throw InvalidArgument("stability_loop: iterations must be at least 1");
  StabilityTrace trace;
  trace.iterations = iters;
  CoocTensor current = c0;
  for (int i = 0; i <= iters; ++i) {
    Image img = synthesize(checkpoint, current, seed);
    CoocTensor measured = measure_tensor(checkpoint, img);
    trace.distances.push_back(l1_distance(current, measured));
    trace.images.push_back(std::move(img));
    current = std::move(measured);
  }
  return trace;
}

StabilityReport stability_report(const ModelCheckpoint& checkpoint,
                                 const std::vector<CoocTensor>& inputs, std::uint64_t seed,
                                 int iters) {
  if (inputs.empty()) throw InvalidArgument("stability_report: no inputs");
  StabilityReport r;
  r.mean_distance.assign(iters + 1, 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const StabilityTrace t =
        stability_loop(checkpoint, inputs[i], derive_seed(seed, "stability/" + std::to_string(i)), iters);
    r.distances.push_back(t.distances);
    for (int j = 0; j <= iters; ++j) r.mean_distance[j] += t.distances[j] / inputs.size();
  }
  const double ref = r.mean_distance[0];
  for (double m : r.mean_distance) r.drift = std::max(r.drift, ref > 0 ? std::abs(m - ref) / ref : 0.0);
  return r;
}

std::string StabilityReport::to_csv() const {
  std::ostringstream s;
  s.precision(10);
  s << "iteration,mean_l1,relative_to_first";
  for (std::size_t i = 0; i < distances.size(); ++i) s << ",input_" << i;
  s << '\n';
  for (std::size_t j = 0; j < mean_distance.size(); ++j) {
    s << j << ',' << mean_distance[j] << ','
      << (mean_distance[0] > 0 ? mean_distance[j] / mean_distance[0] : 0.0);
    for (const auto& d : distances) s << ',' << d[j];
    s << '\n';
  }
  return s.str();
}

void StabilityReport::write_csv(const std::filesystem::path& path) const {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << to_csv();
}

NeighborMetric parse_metric(const std::string& name) {
  if (name == "rgb_l1") return NeighborMetric::kRgbL1;
  if (name == "cooc_l1") return NeighborMetric::kCoocL1;
  throw InvalidArgument("unknown metric '" + name + "' (expected rgb_l1 or cooc_l1)");
}

double rgb_l1(const Image& a, const Image& b) { return mean_abs_diff(a, b); }

std::vector<Neighbor> nearest_neighbors(const Image& sample, const std::vector<Image>& crops,
                                        NeighborMetric metric, int top_m,
                                        const ModelCheckpoint* checkpoint,
                                        const std::vector<CoocTensor>* crop_tensors) {
  if (crops.empty()) throw InvalidArgument("nearest_neighbors: empty training set");
  if (top_m < 1) throw InvalidArgument("nearest_neighbors: top_m must be positive");
  std::vector<Neighbor> all(crops.size());
  if (metric == NeighborMetric::kRgbL1) {
    const int h = crops.front().height(), w = crops.front().width();
    if (sample.height() < h || sample.width() < w)
      throw ShapeMismatch("nearest_neighbors: sample smaller than the training crops");
    const Image query = sample.crop((sample.height() - h) / 2, (sample.width() - w) / 2, h, w);
    for (std::size_t i = 0; i < crops.size(); ++i) all[i] = {i, rgb_l1(query, crops[i])};
  } else {
    if (!checkpoint) throw InvalidArgument("nearest_neighbors: cooc_l1 needs the statistics");
    const CoocTensor q = measure_tensor(*checkpoint, sample);
    std::vector<CoocTensor> measured;
    if (!crop_tensors) {
      measured.resize(crops.size());
      parallel_for(crops.size(), [&](std::size_t i) { measured[i] = measure_tensor(*checkpoint, crops[i]); });
      crop_tensors = &measured;
    }
    if (crop_tensors->size() != crops.size()) throw ShapeMismatch("nearest_neighbors: one tensor per crop");
    for (std::size_t i = 0; i < crops.size(); ++i) {
      const CoocTensor& t = (*crop_tensors)[i];
      if (t.same_shape(q)) {
        all[i] = {i, l1_distance(q, t)};
      } else {
        // Larger samples are compared through their position-averaged matrix.
        all[i] = {i, l1_distance(q.mean_matrix(), t.mean_matrix())};
      }
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  all.resize(std::min<std::size_t>(all.size(), top_m));
  return all;
}

Image diversity_grid(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                     const std::vector<std::uint64_t>& seeds, int gap) {
  if (tensors.empty() || seeds.empty()) throw InvalidArgument("diversity_grid: empty inputs");
  std::vector<Image> cells;
  for (std::uint64_t s : seeds) {
    const std::vector<std::uint64_t> row_seeds(tensors.size(), s);
    for (Image& img : synthesize_batch(checkpoint, tensors, row_seeds)) cells.push_back(std::move(img));
  }
  return tile_images(cells, static_cast<int>(seeds.size()), static_cast<int>(tensors.size()), gap);
}

std::vector<CoocTensor> interpolation_steps(const CoocTensor& a, const CoocTensor& b, int steps) {
  if (steps < 1) throw InvalidArgument("interpolation_steps: steps must be positive");
  std::vector<CoocTensor> out;
  for (int i = 0; i < steps; ++i)
    out.push_back(interpolate_tensors(a, b, steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1)));
  return out;
}

FidelityReport fidelity(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                        std::uint64_t seed) {
  if (tensors.size() < 2) throw InvalidArgument("fidelity: need at least two tensors");
  const std::vector<CoocTensor> out = regenerate(checkpoint, tensors, seed);
  FidelityReport r;
  const std::size_t n = tensors.size();
  // Rotation by half the set is a derangement for n >= 2.
  const std::size_t shift = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    r.matched += l1_distance(out[i], tensors[i]) / n;
    r.shuffled += l1_distance(out[i], tensors[(i + shift) % n]) / n;
  }
  return r;
}

double mean_cooc_distance(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                          std::uint64_t seed) {
  if (tensors.empty()) throw InvalidArgument("mean_cooc_distance: no tensors");
  const std::vector<CoocTensor> out = regenerate(checkpoint, tensors, seed);
  double sum = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) sum += l1_distance(out[i], tensors[i]);
  return sum / tensors.size();
}

}  // namespace cooctex::nn
