#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "cooctex/config.hpp"

namespace cooctex::nn {

/// Fully convolutional generator: every layer upsamples by 2 (nearest) and
/// applies a stride-1 convolution; hidden layers use batch norm + ReLU, the
/// last layer a sigmoid so pixels land in [0,1].
struct GeneratorConfig {
  std::vector<int> widths{256, 128, 64, 32, 3};
  int kernel_size = 5;
  int noise_channels = 32;
  int cooc_channels = 16;

  int layers() const { return static_cast<int>(widths.size()); }
  int upsampling() const { return 1 << layers(); }
  void validate() const;
  bool operator==(const GeneratorConfig&) const = default;
};

/// Critic: stride-2 convolutions with leaky ReLU; the condition is
/// nearest-upsampled to the feature size after layer `inject_after` and
/// concatenated on channels. The last layer is linear unless
/// `sigmoid_output` is set; its score map is averaged per sample.
struct DiscriminatorConfig {
  std::vector<int> widths{64, 128, 256, 512, 1};
  int kernel_size = 5;
  int cooc_channels = 16;
  int inject_after = 3;
  bool sigmoid_output = false;
  double leaky_slope = 0.2;

  int layers() const { return static_cast<int>(widths.size()); }
  int downsampling() const { return 1 << layers(); }
  void validate() const;
  bool operator==(const DiscriminatorConfig&) const = default;
};

void write_config(KeyValueConfig& out, const GeneratorConfig& g, const DiscriminatorConfig& d);
GeneratorConfig read_generator_config(const KeyValueConfig& in);
DiscriminatorConfig read_discriminator_config(const KeyValueConfig& in);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  /// z: (B, noise, h, w); cond: (B, k*k, h, w) normalised. Returns (B, 3, 32h, 32w).
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& cond);

  const GeneratorConfig& config() const { return config_; }

 private:
  GeneratorConfig config_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<torch::nn::BatchNorm2d> norms_;
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);

  /// Per-sample score (B) for crops (B, 3, H, W) under conditions (B, k*k, H/32, W/32).
  torch::Tensor forward(const torch::Tensor& crops, const torch::Tensor& cond);

  /// Unreduced score map (B, 1, H/32, W/32).
  torch::Tensor score_map(const torch::Tensor& crops, const torch::Tensor& cond);

  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(Discriminator);

/// (batch, channels, h, w) standard normal noise, a pure function of seed.
torch::Tensor make_noise(std::int64_t batch, std::int64_t height, std::int64_t width,
                         std::int64_t channels, std::uint64_t seed);

/// Uniform [0,1) draws of the given shape, a pure function of seed.
torch::Tensor make_uniform(torch::IntArrayRef shape, std::uint64_t seed);

}  // namespace cooctex::nn
