// Command-line front end. Every subcommand resolves its settings from
// defaults, an optional --config file, key=value overrides and explicit
// flags (in increasing priority), calls the library, and writes a run
// manifest with the resolved settings and derived seeds.

#include <torch/torch.h>

#include <CLI11.hpp>
#include <cmath>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cooctex/config.hpp"
#include "cooctex/dataset.hpp"
#include "cooctex/error.hpp"
#include "cooctex/image.hpp"
#include "cooctex/log.hpp"
#include "cooctex/nn/checkpoint.hpp"
#include "cooctex/nn/evaluation.hpp"
#include "cooctex/nn/model.hpp"
#include "cooctex/nn/synthesis.hpp"
#include "cooctex/nn/training.hpp"
#include "cooctex/palette.hpp"
#include "cooctex/service/service.hpp"
#include "cooctex/stats_bundle.hpp"
#include "cooctex/util.hpp"

using namespace cooctex;
namespace fs = std::filesystem;

namespace {

/// Bad flags, unknown keys or missing required settings (exit status 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Key {
  std::string name;
  std::string fallback;  // empty: no default
  std::string help;
  bool required = false;
};

/// Resolved settings of one invocation plus what the run adds to its manifest.
class Run {
 public:
  Run(std::string command, KeyValueConfig settings) : command_(std::move(command)), cfg_(std::move(settings)) {}

  const std::string& command() const { return command_; }
  bool has(const std::string& key) const { return cfg_.has(key); }
  std::string str(const std::string& key) const { return cfg_.get_string(key, ""); }
  fs::path path(const std::string& key) const { return cfg_.get_string(key, ""); }
  long long integer(const std::string& key) const { return cfg_.get_int(key, 0); }
  double real(const std::string& key) const { return cfg_.get_double(key, 0.0); }
  bool flag(const std::string& key) const { return cfg_.get_bool(key, false); }
  std::vector<int> ints(const std::string& key) const { return cfg_.get_int_list(key, {}); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg_.get_int("seed", 0)); }
  const KeyValueConfig& settings() const { return cfg_; }

  /// Derived seed recorded in the manifest.
  std::uint64_t derive(const std::string& tag) {
    const std::uint64_t s = derive_seed(seed(), tag);
    record("seed." + tag, std::to_string(s));
    return s;
  }
  void record(const std::string& key, const std::string& value) { extra_.set(key, value); }

  void write_manifest(const fs::path& path) const {
    std::ostringstream text;
    text << "# cooctex run manifest\ncommand = " << command_ << '\n'
         << "# resolved settings\n"
         << cfg_.to_string() << "# derived values\n"
         << extra_.to_string();
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out << text.str();
    log::info("run manifest: " + path.string());
  }

 private:
  std::string command_;
  KeyValueConfig cfg_;
  KeyValueConfig extra_;
};

struct Command {
  std::string name;
  std::string description;
  std::vector<Key> keys;
  /// Runs the command and returns the manifest path.
  std::function<fs::path(Run&)> run;
};

std::pair<int, int> parse_pair(const std::string& text, const std::string& key) {
  std::vector<int> v;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(key + ": expected two comma-separated integers, got '" + text + "'");
    }
  }
  if (v.size() != 2) throw UsageError(key + ": expected two comma-separated integers, got '" + text + "'");
  return {v[0], v[1]};
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const std::string& s : split(text)) {
    try {
      out.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw UsageError("seeds: '" + s + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw UsageError("seeds: at least one seed required");
  return out;
}

fs::path beside(const fs::path& output, const std::string& suffix) { return output.string() + suffix; }

CoocParams read_params(const Run& r) {
  return {static_cast<int>(r.integer("patch")), static_cast<int>(r.integer("window")), r.real("sigma_sq")};
}

const std::vector<Key> kStatKeys = {
    {"k", "4", "number of colour clusters"},
    {"patch", "65", "co-occurrence patch size (odd, pixels)"},
    {"window", "51", "pair window size (odd, pixels)"},
    {"sigma_sq", "51", "variance of the Gaussian pair weight (squared pixels)"},
    {"scale", "32", "tensor cell size s in pixels"},
};

std::vector<Key> with(std::vector<Key> a, const std::vector<Key>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

nn::ModelCheckpoint load_model(const Run& r) { return nn::load_checkpoint(r.path("checkpoint")); }

/// Tensor from --tensor, or measured on --image with the checkpoint's statistics.
CoocTensor input_tensor(const Run& r, const nn::ModelCheckpoint& c, const std::string& key = "tensor") {
  if (r.has(key)) return load_tensor(r.path(key));
  if (r.has("image")) {
    const StatsBundle& s = c.stats;
    return cooc_tensor(load_image(r.path("image")), s.palette, s.params, s.scale);
  }
  throw UsageError("one of --" + key + " or --image is required");
}

// ---------------------------------------------------------------------------
// Subcommands

fs::path fit_palette_cmd(Run& r) {
  const Image exemplar = load_image(r.path("exemplar"));
  StatsBundle stats;
  stats.fit_seed = r.derive("palette");
  stats.palette = fit_palette(exemplar, static_cast<int>(r.integer("k")), stats.fit_seed);
  stats.params = read_params(r);
  stats.params.validate();
  stats.scale = static_cast<int>(r.integer("scale"));
  save_stats(stats, r.path("out"));
  for (int l = 0; l < stats.palette.k(); ++l) {
    const Rgb& c = stats.palette.centers[l];
    std::ostringstream s;
    s << "cluster " << l << ": centre (" << c[0] << ", " << c[1] << ", " << c[2] << ")";
    log::info(s.str());
  }
  return beside(r.path("out"), ".run.txt");
}

fs::path build_dataset_cmd(Run& r) {
  DatasetSpec spec;
  spec.exemplar = r.path("exemplar");
  spec.count = static_cast<int>(r.integer("count"));
  spec.crop_size = static_cast<int>(r.integer("crop"));
  spec.train_fraction = r.real("train_fraction");
  spec.seed = r.seed();
  spec.k = static_cast<int>(r.integer("k"));
  spec.params = read_params(r);
  spec.scale = static_cast<int>(r.integer("scale"));
  if (r.has("palette")) spec.palette = load_stats(r.path("palette")).palette;
  r.record("seed.palette", std::to_string(derive_seed(spec.seed, "palette")));
  r.record("seed.crops", std::to_string(derive_seed(spec.seed, "crops")));
  const fs::path cache = r.has("cache") ? r.path("cache") : default_cache_root();
  const Dataset d = build_dataset(spec, cache);
  r.record("cache_file", d.manifest().cache_path);
  fs::path manifest_at = fs::path(d.manifest().cache_path).replace_extension(".run.txt");
  if (r.has("out")) {
    write_dataset(d, r.path("out"));
    manifest_at = beside(r.path("out"), ".run.txt");
  }
  std::cout << d.manifest().cache_path << '\n';
  return manifest_at;
}

fs::path train_cmd(Run& r) {
  const int threads = static_cast<int>(r.integer("threads"));
  if (threads > 0) torch::set_num_threads(threads);
  const Dataset data = read_dataset(r.path("dataset"));
  const fs::path out = r.path("out");

  nn::TrainConfig cfg = nn::TrainConfig::read(r.settings());
  cfg.seed = r.derive("train");
  nn::ModelCheckpoint c;
  if (r.flag("resume") && fs::exists(out)) {
    c = nn::load_checkpoint(out);
    log::info("resuming " + out.string() + " from epoch " + std::to_string(c.epoch));
  } else {
    c = nn::init_checkpoint(nn::read_generator_config(r.settings()), nn::read_discriminator_config(r.settings()),
                            data.stats(), r.derive("init"));
  }
  nn::TrainOptions options;
  options.checkpoint_path = out;
  options.log_path = r.has("log") ? r.path("log") : beside(out, ".csv");
  r.record("log", options.log_path.string());
  nn::train(cfg, data, c, options);
  save_checkpoint(c, out);
  return beside(out, ".run.txt");
}

fs::path synth_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  const CoocTensor t = input_tensor(r, c);
  if (r.has("tensor_out")) save_tensor(t, r.path("tensor_out"));
  save_png(nn::synthesize(c, t, r.seed()), r.path("out"));
  return beside(r.path("out"), ".run.txt");
}

fs::path interp_cmd(Run& r) {
  const CoocTensor mixed = nn::interpolate_tensors(load_tensor(r.path("from")), load_tensor(r.path("to")), r.real("t"));
  save_tensor(mixed, r.path("out"));
  if (r.has("png")) {
    if (!r.has("checkpoint")) throw UsageError("--png needs --checkpoint");
    save_png(nn::synthesize(load_model(r), mixed, r.seed()), r.path("png"));
  }
  return beside(r.path("out"), ".run.txt");
}

fs::path morph_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  const int steps = static_cast<int>(r.integer("steps"));
  if (steps < 2) throw UsageError("steps must be at least 2");
  nn::MorphSpec spec{load_tensor(r.path("from")), load_tensor(r.path("to")), {}, r.seed()};
  for (int i = 0; i < steps; ++i) spec.t.push_back(static_cast<double>(i) / (steps - 1));
  const auto paths = nn::save_frames(nn::morph_sequence(c, spec), r.path("out"), r.str("prefix"));
  r.record("frames", std::to_string(paths.size()));
  return r.path("out") / "morph.run.txt";
}

fs::path edit_cmd(Run& r) {
  const auto [a, b] = parse_pair(r.str("bin"), "bin");
  std::optional<std::pair<int, int>> cell;
  if (r.has("cell")) cell = parse_pair(r.str("cell"), "cell");
  const CoocTensor edited = nn::edit_tensor_bin(load_tensor(r.path("tensor")), a, b, r.real("factor"), cell);
  save_tensor(edited, r.path("out"));
  return beside(r.path("out"), ".run.txt");
}

fs::path tile_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  const nn::CoocLayout layout = nn::CoocLayout::load(r.path("layout"));
  const Image img = nn::synth_large(c, layout, r.seed(), static_cast<int>(r.integer("blend")));
  save_png(img, r.path("out"));
  r.record("size", std::to_string(img.height()) + "x" + std::to_string(img.width()));
  return beside(r.path("out"), ".run.txt");
}

std::vector<std::size_t> chosen(const Dataset& d, const std::string& split_name, long long count) {
  Split split;
  if (split_name == "test") split = Split::kTest;
  else if (split_name == "train") split = Split::kTrain;
  else throw UsageError("split must be 'train' or 'test'");
  std::vector<std::size_t> idx = d.indices(split);
  if (count > 0 && static_cast<std::size_t>(count) < idx.size()) idx.resize(count);
  if (idx.empty()) throw InvalidArgument("the " + split_name + " split is empty");
  return idx;
}

fs::path eval_stability_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  const Dataset d = read_dataset(r.path("dataset"));
  std::vector<CoocTensor> inputs;
  for (std::size_t i : chosen(d, r.str("split"), r.integer("count"))) inputs.push_back(d.raw(i));
  const nn::StabilityReport rep = nn::stability_report(c, inputs, r.seed(), static_cast<int>(r.integer("iters")));
  rep.write_csv(r.path("out"));
  nlohmann::json summary{{"command", "eval-stability"},
                         {"inputs", inputs.size()},
                         {"iterations", r.integer("iters")},
                         {"drift", rep.drift},
                         {"mean_distance", rep.mean_distance}};
  std::ofstream(beside(r.path("out"), ".json")) << summary.dump(2) << '\n';
  std::cout << "drift " << rep.drift << " over " << r.integer("iters") << " iterations\n";
  return beside(r.path("out"), ".run.txt");
}

fs::path eval_novelty_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  const Dataset d = read_dataset(r.path("dataset"));
  const nn::NeighborMetric metric = nn::parse_metric(r.str("metric"));
  const int top = static_cast<int>(r.integer("top"));
  std::vector<Image> crops;
  std::vector<CoocTensor> tensors;
  for (std::size_t i : d.indices(Split::kTrain)) {
    crops.push_back(d.crops()[i].pixels);
    tensors.push_back(d.raw(i));
  }
  std::ofstream csv(r.path("out"));
  if (!csv) throw Error("cannot write " + r.str("out"));
  csv << "sample,test_index,rank,train_index,distance,metric\n";
  std::vector<Image> cells;
  const auto samples = chosen(d, "test", r.integer("samples"));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Image sample = nn::synthesize(c, d.raw(samples[s]), r.derive("novelty/" + std::to_string(s)));
    const auto nn_list = nn::nearest_neighbors(sample, crops, metric, top, &c, &tensors);
    cells.push_back(sample);
    for (std::size_t m = 0; m < nn_list.size(); ++m) {
      const std::size_t train_index = d.indices(Split::kTrain)[nn_list[m].index];
      csv << s << ',' << samples[s] << ',' << m + 1 << ',' << train_index << ',' << nn_list[m].distance << ','
          << r.str("metric") << '\n';
      cells.push_back(crops[nn_list[m].index]);
    }
  }
  if (r.has("grid"))
    save_png(tile_images(cells, static_cast<int>(samples.size()), top + 1, 4), r.path("grid"));
  return beside(r.path("out"), ".run.txt");
}

fs::path grid_cmd(Run& r) {
  const nn::ModelCheckpoint c = load_model(r);
  std::vector<CoocTensor> tensors;
  if (r.has("tensors")) {
    for (const std::string& p : split(r.str("tensors"))) tensors.push_back(load_tensor(p));
  } else if (r.has("from") && r.has("to")) {
    tensors = nn::interpolation_steps(load_tensor(r.path("from")), load_tensor(r.path("to")),
                                      static_cast<int>(r.integer("steps")));
  } else {
    throw UsageError("grid needs --tensors or --from and --to");
  }
  const Image g = nn::diversity_grid(c, tensors, parse_seeds(r.str("seeds")), static_cast<int>(r.integer("gap")));
  save_png(g, r.path("out"));
  return beside(r.path("out"), ".run.txt");
}

service::Service* g_service = nullptr;

fs::path serve_cmd(Run& r) {
  service::ServiceOptions options;
  options.queue_depth = static_cast<std::size_t>(r.integer("queue_depth"));
  options.history = static_cast<std::size_t>(r.integer("history"));
  options.cors_origin = r.str("cors_origin");
  options.default_seed = r.seed();
  service::Service svc(load_model(r), options);
  const fs::path manifest = r.has("manifest") ? r.path("manifest") : fs::path("serve.run.txt");
  r.write_manifest(manifest);
  g_service = &svc;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  const bool ok = svc.listen(r.str("host"), static_cast<int>(r.integer("port")));
  g_service = nullptr;
  if (!ok) throw Error("cannot listen on " + r.str("host") + ":" + r.str("port"));
  return {};
}

std::vector<Command> commands() {
  const Key checkpoint{"checkpoint", "", "trained checkpoint", true};
  const Key seed{"seed", "0", "seed for all randomness of the run"};
  return {
      {"fit-palette", "fit the colour palette of an exemplar and store the statistics bundle",
       with({{"exemplar", "", "exemplar image", true}, seed, {"out", "", "output statistics file", true}}, kStatKeys),
       fit_palette_cmd},
      {"build-dataset", "extract crops and co-occurrence tensors from an exemplar (cached)",
       with({{"exemplar", "", "exemplar image", true},
             {"count", "2000", "number of crops"},
             {"crop", "128", "crop side in pixels"},
             {"train_fraction", "0.9", "share of crops in the train split"},
             {"palette", "", "reuse the palette of this statistics file"},
             {"cache", "", "cache directory (default $COOCTEX_CACHE_DIR or ./cache)"},
             seed,
             {"out", "", "also write the dataset to this file"}},
            kStatKeys),
       build_dataset_cmd},
      {"train", "train or resume a model on a dataset",
       {{"dataset", "", "dataset file (from build-dataset)", true},
        {"out", "", "checkpoint path", true},
        {"log", "", "CSV training log (default <out>.csv)"},
        {"epochs", "120", "total epochs"},
        {"lr", "0.0002", "Adam learning rate"},
        {"beta1", "0.5", "Adam beta1"},
        {"beta2", "0.999", "Adam beta2"},
        {"lambda_gp", "1", "gradient-penalty weight"},
        {"lambda_cooc", "1", "co-occurrence loss weight"},
        {"batch_size", "16", "batch size"},
        {"n_critic", "1", "critic updates per generator update"},
        {"g_widths", "256,128,64,32,3", "generator layer widths"},
        {"g_kernel", "5", "generator kernel size"},
        {"noise_channels", "32", "noise channels d"},
        {"d_widths", "64,128,256,512,1", "critic layer widths"},
        {"d_kernel", "5", "critic kernel size"},
        {"d_inject_after", "3", "critic layer index receiving the condition"},
        {"d_sigmoid", "false", "sigmoid on the critic output"},
        {"d_leaky_slope", "0.2", "critic leaky-ReLU slope"},
        {"resume", "true", "continue from an existing checkpoint at --out"},
        {"threads", "0", "intra-op threads (0 = library default)"},
        seed},
       train_cmd},
      {"synth", "synthesise a texture from a co-occurrence tensor or a crop",
       {checkpoint,
        {"tensor", "", "tensor file"},
        {"image", "", "crop whose statistics condition the generator"},
        {"tensor_out", "", "also save the conditioning tensor"},
        seed,
        {"out", "", "output PNG", true}},
       synth_cmd},
      {"interp", "interpolate two tensors (optionally synthesise the result)",
       {{"from", "", "tensor at t = 0", true},
        {"to", "", "tensor at t = 1", true},
        {"t", "", "interpolation weight", true},
        {"out", "", "output tensor file", true},
        {"checkpoint", "", "checkpoint for --png"},
        {"png", "", "also synthesise the interpolated tensor"},
        seed},
       interp_cmd},
      {"morph", "frames morphing between two tensors with fixed noise",
       {checkpoint,
        {"from", "", "start tensor", true},
        {"to", "", "end tensor", true},
        {"steps", "8", "number of frames"},
        {"prefix", "frame", "frame file prefix"},
        seed,
        {"out", "", "output directory", true}},
       morph_cmd},
      {"edit", "multiply one co-occurrence bin and renormalise",
       {{"tensor", "", "input tensor file", true},
        {"bin", "", "bin as a,b", true},
        {"factor", "", "multiplicative factor (>= 0)", true},
        {"cell", "", "restrict to tensor cell y,x"},
        {"out", "", "output tensor file", true}},
       edit_cmd},
      {"tile", "synthesise a large texture from a layout of tensors",
       {checkpoint,
        {"layout", "", "layout file", true},
        {"blend", "1", "border blend radius in tensor cells"},
        seed,
        {"out", "", "output PNG", true}},
       tile_cmd},
      {"eval-stability", "degradation loop over dataset tensors",
       {checkpoint,
        {"dataset", "", "dataset file", true},
        {"split", "test", "train or test"},
        {"count", "0", "number of inputs (0 = whole split)"},
        {"iters", "10", "loop iterations"},
        seed,
        {"out", "", "output CSV (summary JSON alongside)", true}},
       eval_stability_cmd},
      {"eval-novelty", "nearest training crops of generated samples",
       {checkpoint,
        {"dataset", "", "dataset file", true},
        {"samples", "4", "number of generated samples (from test tensors)"},
        {"metric", "cooc_l1", "rgb_l1 or cooc_l1"},
        {"top", "3", "neighbours per sample"},
        {"grid", "", "also save samples and neighbours as an image grid"},
        seed,
        {"out", "", "output CSV", true}},
       eval_novelty_cmd},
      {"grid", "fidelity/diversity grid: rows are seeds, columns tensors",
       {checkpoint,
        {"tensors", "", "comma-separated tensor files"},
        {"from", "", "interpolate from this tensor"},
        {"to", "", "interpolate to this tensor"},
        {"steps", "8", "interpolation columns"},
        {"seeds", "1,2,3,4", "comma-separated seeds (rows)"},
        {"gap", "4", "pixels between cells"},
        {"out", "", "output PNG", true}},
       grid_cmd},
      {"serve", "HTTP service for interactive editing",
       {checkpoint,
        {"host", "127.0.0.1", "bind address"},
        {"port", "8080", "port"},
        {"queue_depth", "8", "pending inference jobs before answering 503"},
        {"history", "100", "undo steps per session"},
        {"cors_origin", "*", "Access-Control-Allow-Origin value"},
        {"manifest", "", "run manifest path (default ./serve.run.txt)"},
        seed},
       serve_cmd},
  };
}

std::string dashed(std::string s) {
  for (char& c : s)
    if (c == '_') c = '-';
  return s;
}

/// Defaults < --config file < key=value overrides < explicit flags.
KeyValueConfig resolve(const Command& cmd, const std::string& config_file,
                       const std::vector<std::string>& overrides, const std::map<std::string, CLI::Option*>& options,
                       const std::map<std::string, std::string>& flag_values) {
  std::set<std::string> allowed;
  for (const Key& k : cmd.keys) allowed.insert(k.name);
  KeyValueConfig cfg;
  try {
    if (!config_file.empty()) cfg = KeyValueConfig::load(config_file);
    cfg.apply_overrides(overrides);
    cfg.reject_unknown(allowed);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  for (const auto& [name, opt] : options)
    if (opt->count() > 0) cfg.set(name, flag_values.at(name));
  for (const Key& k : cmd.keys) {
    if (!cfg.has(k.name) && !k.fallback.empty()) cfg.set(k.name, k.fallback);
    if (k.required && !cfg.has(k.name)) throw UsageError("missing required setting '" + k.name + "'");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cooctex: co-occurrence based texture synthesis"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  const std::vector<Command> cmds = commands();
  struct Bound {
    CLI::App* sub;
    std::string config;
    std::vector<std::string> overrides;
    std::map<std::string, CLI::Option*> options;
    std::map<std::string, std::string> values;
  };
  std::vector<Bound> bound(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    Bound& b = bound[i];
    b.sub = app.add_subcommand(cmds[i].name, cmds[i].description);
    b.sub->add_option("--config", b.config, "key = value settings file");
    b.sub->add_option("overrides", b.overrides, "key=value settings overriding the config file");
    for (const Key& k : cmds[i].keys) {
      std::string names = "--" + k.name;
      if (dashed(k.name) != k.name) names += ",--" + dashed(k.name);
      std::string help = k.help;
      if (k.required) help += " (required)";
      else if (!k.fallback.empty()) help += " [" + k.fallback + "]";
      b.options[k.name] = b.sub->add_option(names, b.values[k.name], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  log::set_level(verbose ? log::Level::kDebug : quiet ? log::Level::kWarn : log::Level::kInfo);

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!bound[i].sub->parsed()) continue;
    try {
      Run run(cmds[i].name, resolve(cmds[i], bound[i].config, bound[i].overrides, bound[i].options, bound[i].values));
      const fs::path manifest = cmds[i].run(run);
      if (!manifest.empty()) run.write_manifest(manifest);
      return 0;
    } catch (const UsageError& e) {
      std::cerr << "usage error: " << e.what() << "\n\n" << bound[i].sub->help();
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}
