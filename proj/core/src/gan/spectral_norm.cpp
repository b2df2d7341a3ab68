#include "plgmi/gan/spectral_norm.hpp"

#include <cmath>

namespace plgmi::gan {
namespace {

constexpr double kNormEps = 1e-12;

torch::Tensor unit(const torch::Tensor& x) { return x / x.norm().clamp_min(kNormEps); }

torch::Tensor as_matrix(const torch::Tensor& w) { return w.reshape({w.size(0), -1}); }

}  // namespace

SpectralNormState::SpectralNormState(torch::nn::Module& owner, std::int64_t rows, std::int64_t cols, int iterations)
    : iterations_(iterations) {
  // Draws from the global generator like the other parameter initialisers.
  u_ = owner.register_buffer("sn_u", unit(torch::randn({rows})));
  v_ = owner.register_buffer("sn_v", unit(torch::randn({cols})));
}

void SpectralNormState::power_step(const torch::Tensor& matrix) {
  // In-place so registered buffers keep their identity.
  v_.copy_(unit(torch::mv(matrix.t(), u_)));
  u_.copy_(unit(torch::mv(matrix, v_)));
}

torch::Tensor SpectralNormState::normalize(const torch::Tensor& weight, bool update) {
  auto matrix = as_matrix(weight);
  if (update) {
    torch::NoGradGuard guard;
    auto detached = matrix.detach();
    for (int i = 0; i < iterations_; ++i) power_step(detached);
  }
  // Clones keep the autograd graph valid across later in-place power steps.
  auto sigma = torch::dot(u_.clone(), torch::mv(matrix, v_.clone()));
  return weight / sigma;
}

void SpectralNormState::refresh(const torch::Tensor& weight, int iterations, double tolerance) {
  torch::NoGradGuard guard;
  auto matrix = as_matrix(weight.detach());
  double previous = 0.0;
  for (int i = 0; i < iterations; ++i) {
    power_step(matrix);
    if (tolerance <= 0.0) continue;
    const double sigma = torch::dot(u_, torch::mv(matrix, v_)).item<double>();
    if (std::abs(sigma - previous) <= tolerance * std::abs(sigma)) break;
    previous = sigma;
  }
}

double SpectralNormState::sigma_estimate(const torch::Tensor& weight) const {
  torch::NoGradGuard guard;
  return torch::dot(u_, torch::mv(as_matrix(weight.detach()), v_)).item<double>();
}

SNConv2dImpl::SNConv2dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t padding,
                           int power_iterations)
    : padding_(padding) {
  torch::nn::Conv2d init(torch::nn::Conv2dOptions(in, out, kernel).padding(padding));
  weight = register_parameter("weight", init->weight.detach().clone());
  bias = register_parameter("bias", init->bias.detach().clone());
  sn_ = SpectralNormState(*this, out, in * kernel * kernel, power_iterations);
}

torch::Tensor SNConv2dImpl::forward(const torch::Tensor& x) {
  auto w = sn_.normalize(weight, is_training());
  return torch::conv2d(x, w, bias, /*stride=*/1, padding_);
}

torch::Tensor SNConv2dImpl::normalized_weight_matrix() {
  torch::NoGradGuard guard;
  return as_matrix(sn_.normalize(weight.detach(), false));
}

void SNConv2dImpl::refresh_spectral_norm(int iterations, double tolerance) {
  sn_.refresh(weight, iterations, tolerance);
}

SNLinearImpl::SNLinearImpl(std::int64_t in, std::int64_t out, bool with_bias, int power_iterations) {
  torch::nn::Linear init(torch::nn::LinearOptions(in, out).bias(with_bias));
  weight = register_parameter("weight", init->weight.detach().clone());
  if (with_bias) bias = register_parameter("bias", init->bias.detach().clone());
  sn_ = SpectralNormState(*this, out, in, power_iterations);
}

torch::Tensor SNLinearImpl::forward(const torch::Tensor& x) {
  return torch::linear(x, sn_.normalize(weight, is_training()), bias);
}

torch::Tensor SNLinearImpl::normalized_weight_matrix() {
  torch::NoGradGuard guard;
  return sn_.normalize(weight.detach(), false);
}

void SNLinearImpl::refresh_spectral_norm(int iterations, double tolerance) {
  sn_.refresh(weight, iterations, tolerance);
}

SNEmbeddingImpl::SNEmbeddingImpl(std::int64_t num_classes, std::int64_t dim, int power_iterations) {
  weight = register_parameter("weight", torch::randn({num_classes, dim}) * (1.0 / std::sqrt(static_cast<double>(dim))));
  sn_ = SpectralNormState(*this, num_classes, dim, power_iterations);
}

torch::Tensor SNEmbeddingImpl::forward(const torch::Tensor& labels) {
  return sn_.normalize(weight, is_training()).index_select(0, labels);
}

torch::Tensor SNEmbeddingImpl::normalized_weight_matrix() {
  torch::NoGradGuard guard;
  return sn_.normalize(weight.detach(), false);
}

void SNEmbeddingImpl::refresh_spectral_norm(int iterations, double tolerance) {
  sn_.refresh(weight, iterations, tolerance);
}

double spectral_norm_exact(const torch::Tensor& matrix) {
  torch::NoGradGuard guard;
  return torch::linalg_matrix_norm(matrix.to(torch::kFloat64), 2).item<double>();
}

}  // namespace plgmi::gan
