#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "plgmi/data/image_batch.hpp"
#include "plgmi/gan/spectral_norm.hpp"

namespace plgmi::gan {

struct GeneratorOptions {
  std::int64_t latent_dim = 128;
  std::int64_t num_classes = 0;
  data::ImageShape output;  // square, side 4 * 2^k
  std::int64_t channels = 16;
};

struct DiscriminatorOptions {
  std::int64_t num_classes = 0;
  data::ImageShape input;
  std::int64_t channels = 16;
  int power_iterations = 1;
};

// BatchNorm without affine terms followed by a per-class scale and shift.
class ConditionalBatchNorm2dImpl : public torch::nn::Module {
 public:
  ConditionalBatchNorm2dImpl(std::int64_t channels, std::int64_t num_classes);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& labels);

 private:
  torch::nn::BatchNorm2d bn_{nullptr};
  torch::nn::Embedding gamma_{nullptr};
  torch::nn::Embedding beta_{nullptr};
};
TORCH_MODULE(ConditionalBatchNorm2d);

class GeneratorBlockImpl : public torch::nn::Module {
 public:
  GeneratorBlockImpl(std::int64_t in, std::int64_t out, std::int64_t num_classes);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& labels);

 private:
  ConditionalBatchNorm2d bn1_{nullptr};
  torch::nn::Conv2d conv1_{nullptr};
  ConditionalBatchNorm2d bn2_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d shortcut_{nullptr};
};
TORCH_MODULE(GeneratorBlock);

// Residual generator with class-conditional batch normalization.
class ConditionalGeneratorImpl : public torch::nn::Module {
 public:
  explicit ConditionalGeneratorImpl(const GeneratorOptions& options);

  // Images in [0, 1].
  torch::Tensor forward(const torch::Tensor& z, const torch::Tensor& labels);
  // tanh output in [-1, 1].
  virtual torch::Tensor forward_raw(const torch::Tensor& z, const torch::Tensor& labels);

  const GeneratorOptions& options() const { return options_; }

 private:
  GeneratorOptions options_;
  std::int64_t top_channels_ = 0;
  torch::nn::Linear project_{nullptr};
  std::vector<GeneratorBlock> blocks_;
  torch::nn::BatchNorm2d out_bn_{nullptr};
  torch::nn::Conv2d out_conv_{nullptr};
};
TORCH_MODULE(ConditionalGenerator);

class DiscriminatorBlockImpl : public torch::nn::Module {
 public:
  DiscriminatorBlockImpl(std::int64_t in, std::int64_t out, bool downsample, bool first, int power_iterations);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool downsample_;
  bool first_;
  SNConv2d conv1_{nullptr};
  SNConv2d conv2_{nullptr};
  SNConv2d shortcut_{nullptr};
};
TORCH_MODULE(DiscriminatorBlock);

// Spectrally normalized residual discriminator with label projection:
// D(x, y) = w^T phi(x) + embed(y)^T phi(x) (+ bias).
class ConditionalDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit ConditionalDiscriminatorImpl(const DiscriminatorOptions& options);

  // images in [0, 1]; returns one score per image.
  torch::Tensor forward(const torch::Tensor& images, const torch::Tensor& labels);

  std::vector<SpectralNormalized*> spectral_layers();
  void refresh_spectral_norms(int iterations, double tolerance = 0.0);

  const DiscriminatorOptions& options() const { return options_; }

 private:
  DiscriminatorOptions options_;
  std::vector<DiscriminatorBlock> blocks_;
  SNLinear out_{nullptr};
  SNEmbedding embed_{nullptr};
};
TORCH_MODULE(ConditionalDiscriminator);

// Number of 2x upsampling blocks needed to reach a square side of 4 * 2^k.
std::int64_t upsampling_blocks(const data::ImageShape& shape);

}  // namespace plgmi::gan
