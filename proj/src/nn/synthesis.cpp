#include "cooctex/nn/synthesis.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cooctex/error.hpp"
#include "cooctex/nn/cooc_loss.hpp"
#include "cooctex/stats_bundle.hpp"

namespace cooctex::nn {

namespace {

void check_channels(const ModelCheckpoint& c, const CoocTensor& t) {
  if (t.k() != c.k())
    throw ShapeMismatch("tensor has k=" + std::to_string(t.k()) + " (" + std::to_string(t.channels()) +
                        " channels) but the checkpoint expects k=" + std::to_string(c.k()));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<Image> synthesize_batch(const ModelCheckpoint& checkpoint,
                                    const std::vector<CoocTensor>& tensors,
                                    const std::vector<std::uint64_t>& seeds) {
  if (tensors.size() != seeds.size()) throw InvalidArgument("synthesize: one seed per tensor required");
  if (tensors.empty()) return {};
  std::vector<CoocTensor> normalized;
  for (const CoocTensor& t : tensors) {
    check_channels(checkpoint, t);
    normalized.push_back(checkpoint.stats.normalizer.normalize(t));
  }
  const torch::Tensor cond = to_torch(normalized);
  std::vector<torch::Tensor> noise;
  for (std::uint64_t s : seeds)
    noise.push_back(make_noise(1, cond.size(2), cond.size(3),
                               checkpoint.generator_config.noise_channels, s));

  torch::NoGradGuard no_grad;
  Generator g = checkpoint.generator;
  const bool was_training = g->is_training();
  g->eval();
  const torch::Tensor out = g->forward(torch::cat(noise, 0), cond);
  g->train(was_training);

  std::vector<Image> images;
  for (std::int64_t i = 0; i < out.size(0); ++i) images.push_back(to_image(out[i]));
  return images;
}

Image synthesize(const ModelCheckpoint& checkpoint, const CoocTensor& tensor, std::uint64_t seed) {
  return synthesize_batch(checkpoint, {tensor}, {seed}).front();
}

CoocTensor interpolate_tensors(const CoocTensor& a, const CoocTensor& b, double t) {
  if (!a.same_shape(b)) throw ShapeMismatch("interpolate_tensors: shapes differ");
  if (!std::isfinite(t)) throw InvalidArgument("interpolate_tensors: t must be finite");
  CoocTensor out = a;
  auto o = out.values();
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (1.0 - t) * va[i] + t * vb[i];
  if (t < 0.0 || t > 1.0) {
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        auto cell = out.cell(y, x);
        double sum = 0;
        for (double& v : cell) {
          v = std::max(v, 0.0);
          sum += v;
        }
        if (sum <= 0) throw DegenerateStatistics("interpolate_tensors: a position lost all mass");
        for (double& v : cell) v /= sum;
      }
  }
  return out;
}

std::vector<Image> morph_sequence(const ModelCheckpoint& checkpoint, const MorphSpec& spec) {
  if (!spec.from.same_shape(spec.to)) throw ShapeMismatch("morph_sequence: endpoint shapes differ");
  std::vector<Image> frames;
  for (double t : spec.t)
    frames.push_back(synthesize(checkpoint, interpolate_tensors(spec.from, spec.to, t), spec.seed));
  return frames;
}

std::vector<std::filesystem::path> save_frames(const std::vector<Image>& frames,
                                               const std::filesystem::path& dir,
                                               const std::string& prefix) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "_%04zu.png", i);
    paths.push_back(dir / (prefix + name));
    save_png(frames[i], paths.back());
  }
  return paths;
}

CoocMatrix edit_bin(const CoocMatrix& m, int a, int b, double factor) {
  if (a < 0 || b < 0 || a >= m.k() || b >= m.k())
    throw InvalidArgument("edit_bin: bin (" + std::to_string(a) + "," + std::to_string(b) +
                          ") outside a " + std::to_string(m.k()) + "x" + std::to_string(m.k()) +
                          " matrix");
  if (!std::isfinite(factor) || factor < 0)
    throw InvalidArgument("edit_bin: factor must be finite and non-negative");
  // A unit factor on a normalised matrix is an exact no-op, so such an edit
  // cannot perturb later syntheses by rounding.
  if (factor == 1.0 && std::abs(m.sum() - 1.0) <= 1e-12) return m;
  CoocMatrix out = m;
  out(a, b) = m(a, b) * factor;
  if (a != b) out(b, a) = m(b, a) * factor;
  const double sum = out.sum();
  if (!(sum > 0)) throw InvalidArgument("edit_bin: the edit removes all probability mass");
  for (double& v : out.values()) v /= sum;
  return out;
}

CoocTensor edit_tensor_bin(const CoocTensor& t, int a, int b, double factor,
                           std::optional<std::pair<int, int>> cell) {
  CoocTensor out = t;
  if (cell) {
    const auto [y, x] = *cell;
    if (y < 0 || x < 0 || y >= t.height() || x >= t.width())
      throw InvalidArgument("edit: cell (" + std::to_string(y) + "," + std::to_string(x) +
                            ") outside the tensor");
    out.set_matrix(y, x, edit_bin(t.matrix(y, x), a, b, factor));
    return out;
  }
  for (int y = 0; y < t.height(); ++y)
    for (int x = 0; x < t.width(); ++x) out.set_matrix(y, x, edit_bin(t.matrix(y, x), a, b, factor));
  return out;
}

CoocLayout::CoocLayout(std::vector<std::string> grid, std::map<char, CoocTensor> symbols, int cell)
    : grid_(std::move(grid)), symbols_(std::move(symbols)), cell_(cell) {
  validate();
}

void CoocLayout::validate() const {
  if (cell_ < 1) throw InvalidArgument("layout: cell size must be positive");
  if (grid_.empty() || grid_.front().empty()) throw InvalidArgument("layout: empty grid");
  if (symbols_.empty()) throw InvalidArgument("layout: no symbols defined");
  const CoocTensor& first = symbols_.begin()->second;
  for (const auto& [sym, t] : symbols_) {
    if (t.k() != first.k()) throw ShapeMismatch("layout: symbols disagree on k");
    if (t.scale() != first.scale()) throw ShapeMismatch("layout: symbols disagree on scale");
    if (t.cell_count() == 0) throw InvalidArgument(std::string("layout: symbol '") + sym + "' is empty");
  }
  for (std::size_t r = 0; r < grid_.size(); ++r) {
    if (grid_[r].size() != grid_.front().size())
      throw InvalidArgument("layout: row " + std::to_string(r + 1) + " has " +
                            std::to_string(grid_[r].size()) + " cells, expected " +
                            std::to_string(grid_.front().size()) + " (gapped layout)");
    for (char c : grid_[r])
      if (!symbols_.count(c))
        throw InvalidArgument(std::string("layout: cell symbol '") + c + "' in row " +
                              std::to_string(r + 1) + " is not defined (gap)");
  }
}

CoocLayout CoocLayout::parse(const std::string& text, const std::filesystem::path& base_dir) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> grid;
  std::map<char, CoocTensor> symbols;
  int cell = 1;
  bool in_grid = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (in_grid) {
      const std::string row = trim(line);
      if (!row.empty() && row[0] != '#') grid.push_back(row);
      continue;
    }
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line == "grid:") {
      in_grid = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("layout line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "cell") {
      cell = std::stoi(value);
    } else if (key.size() == 1) {
      const std::filesystem::path p = base_dir.empty() ? std::filesystem::path(value) : base_dir / value;
      if (symbols.count(key[0]))
        throw InvalidArgument("layout line " + std::to_string(line_no) + ": symbol '" + key +
                              "' defined twice (overlap)");
      symbols.emplace(key[0], load_tensor(p));
    } else {
      throw InvalidArgument("layout line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!in_grid) throw InvalidArgument("layout: missing 'grid:' section");
  return CoocLayout(std::move(grid), std::move(symbols), cell);
}

CoocLayout CoocLayout::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open layout " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

CoocTensor CoocLayout::assemble(int blend) const {
  if (blend < 0) throw InvalidArgument("layout: blend must be non-negative");
  const CoocTensor& first = symbols_.begin()->second;
  const int h = height(), w = width(), c = first.channels();
  auto source = [&](char sym, int y, int x) {
    const CoocTensor& t = symbols_.at(sym);
    return t.cell(y % t.height(), x % t.width());
  };
  CoocTensor out(h, w, first.k(), first.scale());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto dst = out.cell(y, x);
      const char own = symbol_at(y, x);
      std::map<char, int> counts;
      int total = 0;
      for (int dy = -blend; dy <= blend; ++dy)
        for (int dx = -blend; dx <= blend; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= h || xx >= w) continue;
          ++counts[symbol_at(yy, xx)];
          ++total;
        }
      if (counts.size() == 1) {
        const auto src = source(own, y, x);
        std::copy(src.begin(), src.end(), dst.begin());
        continue;
      }
      std::fill(dst.begin(), dst.end(), 0.0);
      for (const auto& [sym, n] : counts) {
        const auto src = source(sym, y, x);
        const double weight = static_cast<double>(n) / total;
        for (int i = 0; i < c; ++i) dst[i] += weight * src[i];
      }
    }
  return out;
}

Image synth_large(const ModelCheckpoint& checkpoint, const CoocLayout& layout, std::uint64_t seed,
                  int blend) {
  return synthesize(checkpoint, layout.assemble(blend), seed);
}

}  // namespace cooctex::nn
