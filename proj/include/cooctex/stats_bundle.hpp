#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "cooctex/cooc.hpp"
#include "cooctex/normalizer.hpp"
#include "cooctex/palette.hpp"

namespace cooctex {

/// Everything needed to turn pixels into normalised conditions: palette,
/// normaliser, statistic parameters, downsampling factor and fit seed.
struct StatsBundle {
  static constexpr std::uint32_t kVersion = 1;

  Palette palette;
  Normalizer normalizer;  // may be empty before a dataset is built
  CoocParams params;
  int scale = 32;
  std::uint64_t fit_seed = 0;

  int k() const { return palette.k(); }

  bool operator==(const StatsBundle&) const = default;
};

void write_stats(std::ostream& out, const StatsBundle& stats);
StatsBundle read_stats(std::istream& in);

void save_stats(const StatsBundle& stats, const std::filesystem::path& path);
StatsBundle load_stats(const std::filesystem::path& path);

/// Standalone tensor file; a matrix is stored as a 1x1 tensor.
void save_tensor(const CoocTensor& tensor, const std::filesystem::path& path);
CoocTensor load_tensor(const std::filesystem::path& path);
void write_tensor(std::ostream& out, const CoocTensor& tensor);
CoocTensor read_tensor(std::istream& in);

}  // namespace cooctex
