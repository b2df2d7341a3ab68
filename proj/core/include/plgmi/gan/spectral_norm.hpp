#pragma once

#include <torch/torch.h>

#include <cstdint>

namespace plgmi::gan {

// Power-iteration spectral normalization of a weight viewed as an
// (out x rest) matrix. u/v persist across calls so a single iteration per
// training step tracks the top singular pair.
class SpectralNormState {
 public:
  SpectralNormState() = default;
  SpectralNormState(torch::nn::Module& owner, std::int64_t rows, std::int64_t cols, int iterations);

  // Runs the configured power iterations (when update is true) and returns
  // weight / sigma with sigma = u^T W v; gradients flow through weight only.
  torch::Tensor normalize(const torch::Tensor& weight, bool update);
  // Up to `iterations` extra power steps without producing a weight; stops
  // once the sigma estimate changes by at most `tolerance` (relative).
  void refresh(const torch::Tensor& weight, int iterations, double tolerance = 0.0);
  double sigma_estimate(const torch::Tensor& weight) const;

 private:
  void power_step(const torch::Tensor& matrix);

  torch::Tensor u_;
  torch::Tensor v_;
  int iterations_ = 1;
};

// Common interface for layers carrying a spectrally normalized weight.
class SpectralNormalized {
 public:
  virtual ~SpectralNormalized() = default;
  // The weight as used by the next forward, reshaped to a matrix.
  virtual torch::Tensor normalized_weight_matrix() = 0;
  virtual void refresh_spectral_norm(int iterations, double tolerance = 0.0) = 0;
};

class SNConv2dImpl : public torch::nn::Module, public SpectralNormalized {
 public:
  SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t padding, int power_iterations = 1);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight_matrix() override;
  void refresh_spectral_norm(int iterations, double tolerance = 0.0) override;

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  std::int64_t padding_;
  SpectralNormState sn_;
};
TORCH_MODULE(SNConv2d);

class SNLinearImpl : public torch::nn::Module, public SpectralNormalized {
 public:
  SNLinearImpl(std::int64_t in, std::int64_t out, bool with_bias = true, int power_iterations = 1);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor normalized_weight_matrix() override;
  void refresh_spectral_norm(int iterations, double tolerance = 0.0) override;

  torch::Tensor weight;
  torch::Tensor bias;

 private:
  SpectralNormState sn_;
};
TORCH_MODULE(SNLinear);

// Class embedding table (num_classes x dim) with a normalized weight; used for
// the label projection of the discriminator.
class SNEmbeddingImpl : public torch::nn::Module, public SpectralNormalized {
 public:
  SNEmbeddingImpl(std::int64_t num_classes, std::int64_t dim, int power_iterations = 1);
  torch::Tensor forward(const torch::Tensor& labels);
  torch::Tensor normalized_weight_matrix() override;
  void refresh_spectral_norm(int iterations, double tolerance = 0.0) override;

  torch::Tensor weight;

 private:
  SpectralNormState sn_;
};
TORCH_MODULE(SNEmbedding);

// Exact largest singular value (SVD); used to audit the power-iteration estimate.
double spectral_norm_exact(const torch::Tensor& matrix);

}  // namespace plgmi::gan
