#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cooctex/cooc.hpp"
#include "cooctex/image.hpp"
#include "cooctex/nn/checkpoint.hpp"

namespace cooctex::nn {

/// Generates an image of (s*H) x (s*W) from a raw tensor; normalisation uses
/// the checkpoint's normaliser and the generator runs in inference mode.
Image synthesize(const ModelCheckpoint& checkpoint, const CoocTensor& tensor, std::uint64_t seed);

/// Same, for several tensors of equal shape sharing one noise tensor per seed.
std::vector<Image> synthesize_batch(const ModelCheckpoint& checkpoint,
                                    const std::vector<CoocTensor>& tensors,
                                    const std::vector<std::uint64_t>& seeds);

/// (1 - t) * a + t * b. Outside [0, 1] negative entries are clamped to zero
/// and every position is renormalised to unit sum.
CoocTensor interpolate_tensors(const CoocTensor& a, const CoocTensor& b, double t);

struct MorphSpec {
  CoocTensor from;
  CoocTensor to;
  std::vector<double> t;
  std::uint64_t seed = 0;
};

/// One frame per t, all generated from the same noise tensor.
std::vector<Image> morph_sequence(const ModelCheckpoint& checkpoint, const MorphSpec& spec);

/// Writes frames as prefix_0000.png, prefix_0001.png, ... and returns the paths.
std::vector<std::filesystem::path> save_frames(const std::vector<Image>& frames,
                                               const std::filesystem::path& dir,
                                               const std::string& prefix = "frame");

/// Multiplies bins (a, b) and (b, a) by factor and renormalises to unit sum.
/// Throws InvalidArgument for bad indices, negative or non-finite factors,
/// or when the result has no mass left.
CoocMatrix edit_bin(const CoocMatrix& m, int a, int b, double factor);

/// edit_bin applied to one cell (y, x) or, when `cell` is empty, every cell.
CoocTensor edit_tensor_bin(const CoocTensor& t, int a, int b, double factor,
                           std::optional<std::pair<int, int>> cell = std::nullopt);

/// Spatial arrangement of source tensors. Text format:
///
///   # comment
///   cell = 2            # tensor cells per grid character (default 1)
///   A = stone.ctxt      # symbol = tensor file (relative to the layout file)
///   B = moss.ctxt
///   grid:
///   AAB
///   ABB
///
/// Each region repeats its source tensor periodically in tensor-cell units.
class CoocLayout {
 public:
  CoocLayout() = default;
  CoocLayout(std::vector<std::string> grid, std::map<char, CoocTensor> symbols, int cell = 1);

  static CoocLayout parse(const std::string& text, const std::filesystem::path& base_dir = {});
  static CoocLayout load(const std::filesystem::path& path);

  int rows() const { return static_cast<int>(grid_.size()); }
  int cols() const { return grid_.empty() ? 0 : static_cast<int>(grid_.front().size()); }
  int cell() const { return cell_; }
  /// Tensor-cell height and width of the assembled tensor.
  int height() const { return rows() * cell_; }
  int width() const { return cols() * cell_; }
  char symbol_at(int ty, int tx) const { return grid_[ty / cell_][tx / cell_]; }
  const std::map<char, CoocTensor>& symbols() const { return symbols_; }

  /// One tensor for the whole canvas. With blend > 0 each cell becomes the
  /// average of the region tensors over its (2*blend+1)^2 neighbourhood, so
  /// matrices cross-fade linearly near borders and stay untouched inside.
  CoocTensor assemble(int blend = 0) const;

 private:
  void validate() const;

  std::vector<std::string> grid_;
  std::map<char, CoocTensor> symbols_;
  int cell_ = 1;
};

/// Single generator pass over the assembled layout tensor with one
/// contiguous noise tensor; never stitches pixels.
Image synth_large(const ModelCheckpoint& checkpoint, const CoocLayout& layout, std::uint64_t seed,
                  int blend = 1);

}  // namespace cooctex::nn
