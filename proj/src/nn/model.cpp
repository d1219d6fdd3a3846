#include "cooctex/nn/model.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <sstream>

#include "cooctex/error.hpp"

namespace cooctex::nn {

namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
  return s.str();
}

std::string shape_of(const torch::Tensor& t) {
  std::ostringstream s;
  s << t.sizes();
  return s.str();
}

}  // namespace

void GeneratorConfig::validate() const {
  if (widths.empty()) throw InvalidArgument("generator needs at least one layer");
  if (widths.back() != 3) throw InvalidArgument("generator must end with 3 output channels");
  for (int w : widths)
    if (w < 1) throw InvalidArgument("generator widths must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw InvalidArgument("generator kernel size must be odd");
  if (noise_channels < 0 || cooc_channels < 1)
    throw InvalidArgument("generator input channel counts are invalid");
}

void DiscriminatorConfig::validate() const {
  if (widths.empty()) throw InvalidArgument("discriminator needs at least one layer");
  if (widths.back() != 1) throw InvalidArgument("discriminator must end with 1 output channel");
  for (int w : widths)
    if (w < 1) throw InvalidArgument("discriminator widths must be positive");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw InvalidArgument("discriminator kernel size must be odd");
  if (inject_after < 0 || inject_after >= layers())
    throw InvalidArgument("discriminator injection layer out of range");
  if (cooc_channels < 1) throw InvalidArgument("discriminator needs condition channels");
}

void write_config(KeyValueConfig& out, const GeneratorConfig& g, const DiscriminatorConfig& d) {
  out.set("g_widths", join(g.widths));
  out.set("g_kernel", std::to_string(g.kernel_size));
  out.set("noise_channels", std::to_string(g.noise_channels));
  out.set("cooc_channels", std::to_string(g.cooc_channels));
  out.set("d_widths", join(d.widths));
  out.set("d_kernel", std::to_string(d.kernel_size));
  out.set("d_inject_after", std::to_string(d.inject_after));
  out.set("d_sigmoid", d.sigmoid_output ? "true" : "false");
  std::ostringstream slope;
  slope.precision(17);
  slope << d.leaky_slope;
  out.set("d_leaky_slope", slope.str());
}

GeneratorConfig read_generator_config(const KeyValueConfig& in) {
  GeneratorConfig g;
  g.widths = in.get_int_list("g_widths", g.widths);
  g.kernel_size = static_cast<int>(in.get_int("g_kernel", g.kernel_size));
  g.noise_channels = static_cast<int>(in.get_int("noise_channels", g.noise_channels));
  g.cooc_channels = static_cast<int>(in.get_int("cooc_channels", g.cooc_channels));
  g.validate();
  return g;
}

DiscriminatorConfig read_discriminator_config(const KeyValueConfig& in) {
  DiscriminatorConfig d;
  d.widths = in.get_int_list("d_widths", d.widths);
  d.kernel_size = static_cast<int>(in.get_int("d_kernel", d.kernel_size));
  d.cooc_channels = static_cast<int>(in.get_int("cooc_channels", d.cooc_channels));
  d.inject_after = static_cast<int>(in.get_int("d_inject_after", d.inject_after));
  d.sigmoid_output = in.get_bool("d_sigmoid", d.sigmoid_output);
  d.leaky_slope = in.get_double("d_leaky_slope", d.leaky_slope);
  d.validate();
  return d;
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const int pad = config_.kernel_size / 2;
  int in = config_.noise_channels + config_.cooc_channels;
  for (int i = 0; i < config_.layers(); ++i) {
    const int out = config_.widths[i];
    convs_.push_back(register_module(
        "conv" + std::to_string(i),
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, config_.kernel_size).padding(pad))));
    if (i + 1 < config_.layers())
      norms_.push_back(register_module("bn" + std::to_string(i), torch::nn::BatchNorm2d(out)));
    in = out;
  }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& cond) {
  if (z.dim() != 4 || cond.dim() != 4)
    throw ShapeMismatch("generator: inputs must be 4-d, got " + shape_of(z) + " and " + shape_of(cond));
  if (z.size(0) != cond.size(0) || z.size(2) != cond.size(2) || z.size(3) != cond.size(3))
    throw ShapeMismatch("generator: noise " + shape_of(z) + " and condition " + shape_of(cond) +
                        " disagree in batch or spatial size");
  if (z.size(1) != config_.noise_channels || cond.size(1) != config_.cooc_channels)
    throw ShapeMismatch("generator: expected " + std::to_string(config_.noise_channels) +
                        " noise and " + std::to_string(config_.cooc_channels) +
                        " condition channels, got " + shape_of(z) + " and " + shape_of(cond));
  namespace F = torch::nn::functional;
  const auto up = F::InterpolateFuncOptions()
                      .scale_factor(std::vector<double>{2.0, 2.0})
                      .mode(torch::kNearest);
  torch::Tensor x = torch::cat({z, cond}, 1);
  for (int i = 0; i < config_.layers(); ++i) {
    x = convs_[i]->forward(F::interpolate(x, up));
    if (i + 1 < config_.layers())
      x = torch::relu(norms_[i]->forward(x));
    else
      x = torch::sigmoid(x);
  }
  return x;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(std::move(config)) {
  config_.validate();
  const int pad = config_.kernel_size / 2;
  int in = 3;
  for (int i = 0; i < config_.layers(); ++i) {
    if (i == config_.inject_after) in += config_.cooc_channels;
    const int out = config_.widths[i];
    convs_.push_back(register_module(
        "conv" + std::to_string(i),
        torch::nn::Conv2d(
            torch::nn::Conv2dOptions(in, out, config_.kernel_size).stride(2).padding(pad))));
    in = out;
  }
}

torch::Tensor DiscriminatorImpl::score_map(const torch::Tensor& crops, const torch::Tensor& cond) {
  if (crops.dim() != 4 || cond.dim() != 4 || crops.size(1) != 3)
    throw ShapeMismatch("discriminator: expected (B,3,H,W) crops and 4-d condition, got " +
                        shape_of(crops) + " and " + shape_of(cond));
  const std::int64_t s = config_.downsampling();
  if (crops.size(0) != cond.size(0) || crops.size(2) != cond.size(2) * s ||
      crops.size(3) != cond.size(3) * s || cond.size(1) != config_.cooc_channels)
    throw ShapeMismatch("discriminator: crops " + shape_of(crops) + " incompatible with condition " +
                        shape_of(cond) + " at downsampling " + std::to_string(s));
  namespace F = torch::nn::functional;
  torch::Tensor x = crops;
  for (int i = 0; i < config_.layers(); ++i) {
    if (i == config_.inject_after) {
      const auto size = std::vector<std::int64_t>{x.size(2), x.size(3)};
      x = torch::cat({x, F::interpolate(cond, F::InterpolateFuncOptions().size(size).mode(torch::kNearest))}, 1);
    }
    x = convs_[i]->forward(x);
    if (i + 1 < config_.layers())
      x = torch::leaky_relu(x, config_.leaky_slope);
    else if (config_.sigmoid_output)
      x = torch::sigmoid(x);
  }
  return x;
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& crops, const torch::Tensor& cond) {
  return score_map(crops, cond).mean({1, 2, 3});
}

torch::Tensor make_noise(std::int64_t batch, std::int64_t height, std::int64_t width,
                         std::int64_t channels, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::randn({batch, channels, height, width}, gen, torch::kFloat);
}

torch::Tensor make_uniform(torch::IntArrayRef shape, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::rand(shape, gen, torch::kFloat);
}

}  // namespace cooctex::nn
