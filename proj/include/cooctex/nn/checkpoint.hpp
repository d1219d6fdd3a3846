#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cooctex/nn/model.hpp"
#include "cooctex/stats_bundle.hpp"

namespace cooctex::nn {

/// Generator + critic parameters together with everything needed to use
/// them without the dataset: statistics bundle (palette, normaliser,
/// parameters) and the training state for resuming.
struct ModelCheckpoint {
  static constexpr std::uint32_t kVersion = 1;

  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  StatsBundle stats;
  Generator generator{nullptr};
  Discriminator discriminator{nullptr};

  int epoch = 0;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  /// Key-value text of the training configuration that produced this state.
  std::string train_config;
  /// Serialised optimiser state; empty before the first step.
  std::string generator_optimizer;
  std::string discriminator_optimizer;

  int k() const { return stats.k(); }

  /// Independent deep copy (parameters, buffers and metadata).
  ModelCheckpoint clone() const;
};

/// Freshly initialised networks; parameters are a pure function of `seed`.
/// The condition channel counts are taken from the palette (k^2).
ModelCheckpoint init_checkpoint(GeneratorConfig g, DiscriminatorConfig d, StatsBundle stats,
                                std::uint64_t seed);

/// Writes atomically (temp file + rename).
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Parameter and buffer blobs as stored in the checkpoint.
std::string serialize_module(const torch::nn::Module& module);
void deserialize_module(torch::nn::Module& module, const std::string& blob);

}  // namespace cooctex::nn
