#include "cooctex/nn/cooc_loss.hpp"

#include "cooctex/error.hpp"
#include "cooctex/util.hpp"

namespace cooctex::nn {

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::tensor_list;

struct LossInputs {
  const std::vector<CoocTensor>* targets;
  const Palette* palette;
  const CoocParams* params;
};

class CoocLossFunction : public torch::autograd::Function<CoocLossFunction> {
 public:
  static torch::Tensor forward(AutogradContext* ctx, torch::Tensor images, LossInputs in) {
    const auto batch = images.size(0);
    const int height = static_cast<int>(images.size(2));
    const int width = static_cast<int>(images.size(3));
    const bool want_grad = images.requires_grad();
    const torch::Tensor hwc =
        images.detach().to(torch::kDouble).permute({0, 2, 3, 1}).contiguous();

    std::vector<double> losses(batch);
    torch::Tensor grad_hwc = want_grad ? torch::zeros_like(hwc) : torch::Tensor();
    parallel_for(static_cast<std::size_t>(batch), [&](std::size_t b) {
      const double* px = hwc[b].data_ptr<double>();
      const std::span<const double> rgb(px, static_cast<std::size_t>(height) * width * 3);
      CoocLossResult r = cooc_l1(rgb, height, width, (*in.targets)[b], *in.palette, *in.params,
                                 want_grad);
      losses[b] = r.loss;
      if (want_grad) std::copy(r.pixel_grad.begin(), r.pixel_grad.end(), grad_hwc[b].data_ptr<double>());
    });
    if (want_grad)
      ctx->save_for_backward({grad_hwc.permute({0, 3, 1, 2}).to(images.scalar_type())});
    return torch::tensor(losses, torch::kDouble).to(images.scalar_type());
  }

  static tensor_list backward(AutogradContext* ctx, tensor_list grad_outputs) {
    const torch::Tensor pixel_grad = ctx->get_saved_variables()[0];
    const torch::Tensor g = grad_outputs[0].view({-1, 1, 1, 1});
    return {g * pixel_grad, torch::Tensor()};
  }
};

}  // namespace

torch::Tensor cooc_loss(const torch::Tensor& images, const std::vector<CoocTensor>& targets,
                        const Palette& palette, const CoocParams& params) {
  if (images.dim() != 4 || images.size(1) != 3)
    throw ShapeMismatch("cooc_loss: images must be (B, 3, H, W)");
  if (images.size(0) != static_cast<std::int64_t>(targets.size()))
    throw ShapeMismatch("cooc_loss: " + std::to_string(images.size(0)) + " images but " +
                        std::to_string(targets.size()) + " targets");
  for (const CoocTensor& t : targets) {
    if (t.k() != palette.k()) throw ShapeMismatch("cooc_loss: target k differs from palette k");
    if (images.size(2) != static_cast<std::int64_t>(t.height()) * t.scale() ||
        images.size(3) != static_cast<std::int64_t>(t.width()) * t.scale())
      throw ShapeMismatch("cooc_loss: crop " + std::to_string(images.size(2)) + "x" +
                          std::to_string(images.size(3)) + " does not match target " +
                          std::to_string(t.height()) + "x" + std::to_string(t.width()) +
                          " at scale " + std::to_string(t.scale()));
  }
  return CoocLossFunction::apply(images, LossInputs{&targets, &palette, &params});
}

torch::Tensor to_torch(const std::vector<CoocTensor>& tensors) {
  if (tensors.empty()) throw InvalidArgument("to_torch: empty tensor list");
  const CoocTensor& first = tensors.front();
  const auto b = static_cast<std::int64_t>(tensors.size());
  torch::Tensor out = torch::empty({b, first.height(), first.width(), first.channels()}, torch::kDouble);
  for (std::int64_t i = 0; i < b; ++i) {
    if (!tensors[i].same_shape(first)) throw ShapeMismatch("to_torch: tensors differ in shape");
    std::copy(tensors[i].values().begin(), tensors[i].values().end(), out[i].data_ptr<double>());
  }
  return out.permute({0, 3, 1, 2}).to(torch::kFloat).contiguous();
}

torch::Tensor to_torch(const CoocTensor& tensor) { return to_torch(std::vector<CoocTensor>{tensor}); }

torch::Tensor to_torch(const std::vector<Image>& images) {
  if (images.empty()) throw InvalidArgument("to_torch: empty image list");
  const auto b = static_cast<std::int64_t>(images.size());
  const int h = images.front().height(), w = images.front().width();
  torch::Tensor out = torch::empty({b, h, w, 3}, torch::kFloat);
  for (std::int64_t i = 0; i < b; ++i) {
    if (images[i].height() != h || images[i].width() != w)
      throw ShapeMismatch("to_torch: images differ in size");
    std::copy(images[i].data().begin(), images[i].data().end(), out[i].data_ptr<float>());
  }
  return out.permute({0, 3, 1, 2}).contiguous();
}

Image to_image(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeMismatch("to_image: expected (3, H, W)");
  const torch::Tensor hwc = chw.detach().to(torch::kFloat).clamp(0, 1).permute({1, 2, 0}).contiguous();
  Image img(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)));
  std::copy(hwc.data_ptr<float>(), hwc.data_ptr<float>() + hwc.numel(), img.data().begin());
  return img;
}

std::vector<double> to_rgb_buffer(const torch::Tensor& chw) {
  if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeMismatch("to_rgb_buffer: expected (3, H, W)");
  const torch::Tensor hwc = chw.detach().to(torch::kDouble).permute({1, 2, 0}).contiguous();
  return {hwc.data_ptr<double>(), hwc.data_ptr<double>() + hwc.numel()};
}

}  // namespace cooctex::nn
