#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cooctex/cooc.hpp"
#include "cooctex/image.hpp"
#include "cooctex/nn/checkpoint.hpp"

namespace cooctex::nn {

/// Co-occurrence tensor of an image under the checkpoint's statistics. Z is
/// floored as in the training loss, so off-palette generated pixels count as
/// missing mass instead of raising.
CoocTensor measure_tensor(const ModelCheckpoint& checkpoint, const Image& image);

/// Repeatedly synthesises from the current tensor and re-measures it.
struct StabilityTrace {
  std::vector<Image> images;
  /// |C_in - C_out|_1 per iteration; distances[0] is the one-shot loss on C0.
  std::vector<double> distances;
  int iterations = 0;
};

/// iters + 1 syntheses (iteration 0 .. iters), all with the noise of `seed`.
StabilityTrace stability_loop(const ModelCheckpoint& checkpoint, const CoocTensor& c0,
                              std::uint64_t seed, int iters);

struct StabilityReport {
  /// Mean over inputs of the per-iteration distance.
  std::vector<double> mean_distance;
  /// max_i |mean_i - mean_0| / mean_0.
  double drift = 0;
  /// Per-input traces' distances, [input][iteration].
  std::vector<std::vector<double>> distances;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

StabilityReport stability_report(const ModelCheckpoint& checkpoint,
                                 const std::vector<CoocTensor>& inputs, std::uint64_t seed,
                                 int iters);

enum class NeighborMetric { kRgbL1, kCoocL1 };

NeighborMetric parse_metric(const std::string& name);

struct Neighbor {
  std::size_t index = 0;
  double distance = 0;
};

/// Mean absolute channel difference between two equally sized images.
double rgb_l1(const Image& a, const Image& b);

/// Exhaustive top-m search. rgb_l1 centre-crops a larger sample to the crop
/// size; cooc_l1 compares tensors (crop tensors are measured unless given).
/// Ties are broken by index. Throws InvalidArgument on an empty set.
std::vector<Neighbor> nearest_neighbors(const Image& sample, const std::vector<Image>& crops,
                                        NeighborMetric metric, int top_m,
                                        const ModelCheckpoint* checkpoint = nullptr,
                                        const std::vector<CoocTensor>* crop_tensors = nullptr);

/// Rows = seeds, columns = tensors; each cell is synthesize(tensor, seed).
Image diversity_grid(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                     const std::vector<std::uint64_t>& seeds, int gap = 0);

/// `steps` evenly spaced tensors from a to b inclusive.
std::vector<CoocTensor> interpolation_steps(const CoocTensor& a, const CoocTensor& b, int steps);

/// Fidelity of the conditioning on a set of raw tensors.
struct FidelityReport {
  /// mean_i |C(G(z_i, C_i)) - C_i|_1
  double matched = 0;
  /// mean_i |C(G(z_i, C_i)) - C_pi(i)|_1 for a fixed derangement pi
  double shuffled = 0;
  double ratio() const { return matched > 0 ? shuffled / matched : 0; }
};

FidelityReport fidelity(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                        std::uint64_t seed);

/// mean_i |C(G(z_i, C_i)) - C_i|_1, with z_i drawn from (seed, i).
double mean_cooc_distance(const ModelCheckpoint& checkpoint, const std::vector<CoocTensor>& tensors,
                          std::uint64_t seed);

}  // namespace cooctex::nn
