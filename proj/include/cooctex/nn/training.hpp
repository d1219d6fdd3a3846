#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cooctex/config.hpp"
#include "cooctex/dataset.hpp"
#include "cooctex/nn/checkpoint.hpp"

namespace cooctex::nn {

struct TrainConfig {
  int epochs = 120;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_gp = 1.0;
  double lambda_cooc = 1.0;
  int batch_size = 16;
  int n_critic = 1;
  std::uint64_t seed = 0;

  void validate() const;
  void write(KeyValueConfig& out) const;
  static TrainConfig read(const KeyValueConfig& in);
  bool operator==(const TrainConfig&) const = default;
};

/// One generator update and the critic updates preceding it.
struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double d_loss = 0;
  double wasserstein = 0;
  double gradient_penalty = 0;
  double g_adversarial = 0;
  double cooc_loss = 0;
  double g_loss = 0;
  double seconds = 0;
};

/// Append-only per-step log with a fixed CSV schema.
class TrainLog {
 public:
  static constexpr const char* kHeader =
      "epoch,step,d_loss,wasserstein,gradient_penalty,g_adversarial,cooc_loss,g_loss,seconds";

  void append(const StepRecord& r) { rows_.push_back(r); }
  const std::vector<StepRecord>& rows() const { return rows_; }

  /// CSV text; `notes` become leading `#` comment lines.
  std::string to_csv(const std::vector<std::string>& notes = {}) const;
  void write_csv(const std::filesystem::path& path, const std::vector<std::string>& notes = {}) const;
  static TrainLog read_csv(const std::filesystem::path& path);

 private:
  std::vector<StepRecord> rows_;
};

struct CriticStep {
  double loss = 0;
  double wasserstein = 0;
  double gradient_penalty = 0;
  torch::Tensor real;
  torch::Tensor fake;
  torch::Tensor mix;           // u per sample, (B)
  torch::Tensor interpolates;  // u * real + (1 - u) * fake
};

struct GeneratorStep {
  double loss = 0;
  double adversarial = 0;
  double cooc = 0;
};

/// Owns the two Adam optimisers for one checkpoint's networks.
class Trainer {
 public:
  Trainer(ModelCheckpoint& checkpoint, TrainConfig config);

  /// Critic update: E[D(fake)] - E[D(real)] + lambda_gp * E[(|grad D(x_hat)| - 1)^2]
  /// with x_hat = u * real + (1 - u) * fake. Updates the critic only. Noise
  /// and u come from `seed`; pass `mix` to fix u explicitly.
  CriticStep discriminator_step(const torch::Tensor& real, const torch::Tensor& cond,
                                std::uint64_t seed, const torch::Tensor& mix = {});

  /// Generator update: -E[D(G(z, c), c)] + lambda_cooc * mean co-occurrence
  /// L1 of G(z, c) against the raw tensors. Updates the generator only.
  GeneratorStep generator_step(const torch::Tensor& cond, const std::vector<CoocTensor>& raw,
                               std::uint64_t seed);

  /// Copies optimiser state into the checkpoint's blobs.
  void store_optimizer_state();

  const TrainConfig& config() const { return config_; }

 private:
  ModelCheckpoint& checkpoint_;
  TrainConfig config_;
  torch::optim::Adam g_optimizer_;
  torch::optim::Adam d_optimizer_;
};

struct TrainOptions {
  /// Where to write the checkpoint after every epoch (empty: keep in memory).
  std::filesystem::path checkpoint_path;
  /// CSV log, rewritten after every epoch (empty: not written).
  std::filesystem::path log_path;
  /// Called after every epoch with a copy of the checkpoint.
  std::function<void(const ModelCheckpoint&, const TrainLog&)> on_epoch;
};

/// Runs epochs checkpoint.epoch .. config.epochs - 1, each over the train
/// split in (seed, epoch) order with n_critic critic updates per generator
/// update. Resuming from a saved checkpoint continues bit-identically.
/// Throws TrainingDiverged (after saving a `.diverged` snapshot when a
/// checkpoint path is set) on a non-finite loss.
TrainLog train(const TrainConfig& config, const Dataset& dataset, ModelCheckpoint& checkpoint,
               const TrainOptions& options = {});

/// Gathers a batch: (crops, normalised conditions, raw tensors).
struct Batch {
  torch::Tensor crops;
  torch::Tensor conditions;
  std::vector<CoocTensor> raw;
};
Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& indices);

}  // namespace cooctex::nn
