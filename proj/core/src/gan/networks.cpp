#include "plgmi/gan/networks.hpp"

#include "plgmi/error.hpp"

namespace plgmi::gan {
namespace {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

torch::Tensor upsample2x(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest)
                               .recompute_scale_factor(false));
}

torch::Tensor avgpool2x(const torch::Tensor& x) { return F::avg_pool2d(x, F::AvgPool2dFuncOptions(2)); }

}  // namespace

std::int64_t upsampling_blocks(const data::ImageShape& shape) {
  require(shape.height == shape.width, ErrorKind::kInvalidArgument, "GAN images must be square, got " + shape.str());
  std::int64_t side = shape.height, blocks = 0;
  while (side > 4 && side % 2 == 0) {
    side /= 2;
    ++blocks;
  }
  require(side == 4 && blocks >= 1, ErrorKind::kInvalidArgument,
          "GAN image side must be 4 * 2^k with k >= 1, got " + shape.str());
  return blocks;
}

ConditionalBatchNorm2dImpl::ConditionalBatchNorm2dImpl(std::int64_t channels, std::int64_t num_classes) {
  bn_ = register_module("bn", nn::BatchNorm2d(nn::BatchNorm2dOptions(channels).affine(false)));
  gamma_ = register_module("gamma", nn::Embedding(num_classes, channels));
  beta_ = register_module("beta", nn::Embedding(num_classes, channels));
  torch::NoGradGuard guard;
  gamma_->weight.fill_(1.0);
  beta_->weight.zero_();
}

torch::Tensor ConditionalBatchNorm2dImpl::forward(const torch::Tensor& x, const torch::Tensor& labels) {
  auto g = gamma_(labels).unsqueeze(2).unsqueeze(3);
  auto b = beta_(labels).unsqueeze(2).unsqueeze(3);
  return bn_(x) * g + b;
}

GeneratorBlockImpl::GeneratorBlockImpl(std::int64_t in, std::int64_t out, std::int64_t num_classes) {
  bn1_ = register_module("bn1", ConditionalBatchNorm2d(in, num_classes));
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
  bn2_ = register_module("bn2", ConditionalBatchNorm2d(out, num_classes));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
  shortcut_ = register_module("shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor GeneratorBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& labels) {
  auto h = conv1_(upsample2x(torch::relu(bn1_(x, labels))));
  h = conv2_(torch::relu(bn2_(h, labels)));
  return h + shortcut_(upsample2x(x));
}

ConditionalGeneratorImpl::ConditionalGeneratorImpl(const GeneratorOptions& options) : options_(options) {
  require(options.latent_dim >= 1 && options.num_classes >= 1 && options.channels >= 1, ErrorKind::kInvalidArgument,
          "generator needs positive latent_dim, num_classes and channels");
  const auto blocks = upsampling_blocks(options.output);
  const auto base = options.channels;
  top_channels_ = base << (blocks - 1);
  project_ = register_module("project", nn::Linear(options.latent_dim, 4 * 4 * top_channels_));
  std::int64_t in = top_channels_;
  for (std::int64_t i = 0; i < blocks; ++i) {
    const std::int64_t out = std::max<std::int64_t>(base, top_channels_ >> (i + 1));
    blocks_.push_back(register_module("block" + std::to_string(i), GeneratorBlock(in, out, options.num_classes)));
    in = out;
  }
  out_bn_ = register_module("out_bn", nn::BatchNorm2d(in));
  out_conv_ = register_module("out_conv", nn::Conv2d(nn::Conv2dOptions(in, options.output.channels, 3).padding(1)));
}

torch::Tensor ConditionalGeneratorImpl::forward_raw(const torch::Tensor& z, const torch::Tensor& labels) {
  require(z.dim() == 2 && z.size(1) == options_.latent_dim, ErrorKind::kInvalidArgument,
          "latent batch must be N x " + std::to_string(options_.latent_dim));
  require(labels.dim() == 1 && labels.size(0) == z.size(0), ErrorKind::kInvalidArgument,
          "one class label per latent vector is required");
  if (labels.numel() > 0) {
    require(labels.min().item<std::int64_t>() >= 0 && labels.max().item<std::int64_t>() < options_.num_classes,
            ErrorKind::kInvalidArgument, "generator class label out of range");
  }
  auto h = project_(z).view({-1, top_channels_, 4, 4});
  for (auto& block : blocks_) h = block(h, labels);
  return torch::tanh(out_conv_(torch::relu(out_bn_(h))));
}

torch::Tensor ConditionalGeneratorImpl::forward(const torch::Tensor& z, const torch::Tensor& labels) {
  return (forward_raw(z, labels) + 1.0) * 0.5;
}

DiscriminatorBlockImpl::DiscriminatorBlockImpl(std::int64_t in, std::int64_t out, bool downsample, bool first,
                                               int power_iterations)
    : downsample_(downsample), first_(first) {
  conv1_ = register_module("conv1", SNConv2d(in, out, 3, 1, power_iterations));
  conv2_ = register_module("conv2", SNConv2d(out, out, 3, 1, power_iterations));
  if (in != out || downsample) shortcut_ = register_module("shortcut", SNConv2d(in, out, 1, 0, power_iterations));
}

torch::Tensor DiscriminatorBlockImpl::forward(const torch::Tensor& x) {
  // The first block skips the leading activation (raw pixels) and pools
  // before its shortcut convolution.
  auto h = conv1_(first_ ? x : torch::relu(x));
  h = conv2_(torch::relu(h));
  if (downsample_) h = avgpool2x(h);
  torch::Tensor skip = x;
  if (shortcut_) {
    skip = first_ ? shortcut_(downsample_ ? avgpool2x(x) : x) : shortcut_(x);
    if (!first_ && downsample_) skip = avgpool2x(skip);
  }
  return h + skip;
}

ConditionalDiscriminatorImpl::ConditionalDiscriminatorImpl(const DiscriminatorOptions& options) : options_(options) {
  require(options.num_classes >= 1 && options.channels >= 1, ErrorKind::kInvalidArgument,
          "discriminator needs positive num_classes and channels");
  const auto ups = upsampling_blocks(options.input);
  const auto ch = options.channels;
  const int pi = options.power_iterations;
  // Downsample to 8x8 (4x4 for 8x8 inputs), then one block at that resolution.
  const std::int64_t downs = std::max<std::int64_t>(ups - 1, 1);
  blocks_.push_back(register_module("block0", DiscriminatorBlock(options.input.channels, ch, true, true, pi)));
  for (std::int64_t i = 1; i < downs; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), DiscriminatorBlock(ch, ch, true, false, pi)));
  }
  blocks_.push_back(register_module("block" + std::to_string(downs), DiscriminatorBlock(ch, ch, false, false, pi)));
  out_ = register_module("out", SNLinear(ch, 1, true, pi));
  embed_ = register_module("embed", SNEmbedding(options.num_classes, ch, pi));
}

torch::Tensor ConditionalDiscriminatorImpl::forward(const torch::Tensor& images, const torch::Tensor& labels) {
  auto h = images * 2.0 - 1.0;
  for (auto& block : blocks_) h = block(h);
  h = torch::relu(h).sum({2, 3});
  auto score = out_(h).squeeze(1);
  return score + (embed_(labels) * h).sum(1);
}

std::vector<SpectralNormalized*> ConditionalDiscriminatorImpl::spectral_layers() {
  std::vector<SpectralNormalized*> out;
  for (const auto& m : modules(/*include_self=*/false)) {
    if (auto* sn = dynamic_cast<SpectralNormalized*>(m.get())) out.push_back(sn);
  }
  return out;
}

void ConditionalDiscriminatorImpl::refresh_spectral_norms(int iterations, double tolerance) {
  for (auto* layer : spectral_layers()) layer->refresh_spectral_norm(iterations, tolerance);
}

}  // namespace plgmi::gan
