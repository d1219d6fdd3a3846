#include "cooctex/nn/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "cooctex/binary_io.hpp"
#include "cooctex/error.hpp"

namespace cooctex::nn {

namespace {

constexpr io::Magic kCheckpointMagic{'C', 'T', 'X', 'C', 'K', 'P', 'T', '\0'};

std::string module_config_text(const GeneratorConfig& g, const DiscriminatorConfig& d) {
  KeyValueConfig c;
  write_config(c, g, d);
  return c.to_string();
}

}  // namespace

std::string serialize_module(const torch::nn::Module& module) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  std::ostringstream out;
  archive.save_to(out);
  return out.str();
}

void deserialize_module(torch::nn::Module& module, const std::string& blob) {
  torch::serialize::InputArchive archive;
  std::istringstream in(blob);
  try {
    archive.load_from(in);
    module.load(archive);
  } catch (const c10::Error& e) {
    throw FormatError(std::string("checkpoint: cannot load module parameters: ") + e.what_without_backtrace());
  }
}

ModelCheckpoint init_checkpoint(GeneratorConfig g, DiscriminatorConfig d, StatsBundle stats,
                                std::uint64_t seed) {
  const int channels = stats.k() * stats.k();
  g.cooc_channels = channels;
  d.cooc_channels = channels;
  if (g.upsampling() != stats.scale || d.downsampling() != stats.scale)
    throw InvalidArgument("network scale (generator x" + std::to_string(g.upsampling()) +
                          ", critic /" + std::to_string(d.downsampling()) +
                          ") must equal the tensor downsampling factor " + std::to_string(stats.scale));
  ModelCheckpoint c;
  c.generator_config = g;
  c.discriminator_config = d;
  c.stats = std::move(stats);
  c.seed = seed;
  torch::manual_seed(seed);
  c.generator = Generator(g);
  c.discriminator = Discriminator(d);
  return c;
}

ModelCheckpoint ModelCheckpoint::clone() const {
  ModelCheckpoint c = *this;
  c.generator = Generator(generator_config);
  c.discriminator = Discriminator(discriminator_config);
  deserialize_module(*c.generator, serialize_module(*generator));
  deserialize_module(*c.discriminator, serialize_module(*discriminator));
  c.generator->train(generator->is_training());
  c.discriminator->train(discriminator->is_training());
  return c;
}

void save_checkpoint(const ModelCheckpoint& c, const std::filesystem::path& path) {
  nlohmann::json header;
  header["modules"] = module_config_text(c.generator_config, c.discriminator_config);
  header["epoch"] = c.epoch;
  header["step"] = c.step;
  header["seed"] = c.seed;
  header["train_config"] = c.train_config;

  std::ostringstream stats;
  write_stats(stats, c.stats);

  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    io::Writer w(out);
    w.magic(kCheckpointMagic);
    w.put<std::uint32_t>(ModelCheckpoint::kVersion);
    w.put_string(header.dump());
    w.put_string(stats.str());
    w.put_string(serialize_module(*c.generator));
    w.put_string(serialize_module(*c.discriminator));
    w.put_string(c.generator_optimizer);
    w.put_string(c.discriminator_optimizer);
    w.check();
  }
  std::filesystem::rename(tmp, path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  io::Reader r(in);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != ModelCheckpoint::kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_string());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  ModelCheckpoint c;
  try {
    const KeyValueConfig modules = KeyValueConfig::parse(header.at("modules").get<std::string>());
    c.generator_config = read_generator_config(modules);
    c.discriminator_config = read_discriminator_config(modules);
    c.epoch = header.at("epoch").get<int>();
    c.step = header.at("step").get<std::int64_t>();
    c.seed = header.at("seed").get<std::uint64_t>();
    c.train_config = header.at("train_config").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  std::istringstream stats(r.get_string());
  c.stats = read_stats(stats);
  c.generator = Generator(c.generator_config);
  c.discriminator = Discriminator(c.discriminator_config);
  deserialize_module(*c.generator, r.get_string());
  deserialize_module(*c.discriminator, r.get_string());
  c.generator_optimizer = r.get_string();
  c.discriminator_optimizer = r.get_string();
  return c;
}

}  // namespace cooctex::nn
