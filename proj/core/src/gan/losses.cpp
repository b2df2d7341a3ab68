#include "plgmi/gan/losses.hpp"

#include <cmath>

#include "plgmi/error.hpp"

namespace plgmi::gan {
namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  require(t.defined() && t.numel() > 0, ErrorKind::kInvalidArgument, std::string(what) + " is empty");
  require(torch::isfinite(t.detach()).all().item<bool>(), ErrorKind::kNumerical,
          std::string(what) + " contains non-finite values");
}

}  // namespace

torch::Tensor discriminator_hinge_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  require_finite(d_real, "d_real");
  require_finite(d_fake, "d_fake");
  return torch::relu(1.0 - d_real).mean() + torch::relu(1.0 + d_fake).mean();
}

GeneratorLoss generator_loss(const torch::Tensor& d_fake, const torch::Tensor& images, const torch::Tensor& labels,
                             const models::Classifier& target, const AugmentationPolicy& policy,
                             const std::vector<AugmentationParams>& params, double alpha,
                             inversion::InversionLoss inv_loss) {
  require(alpha >= 0.0 && std::isfinite(alpha), ErrorKind::kInvalidArgument, "alpha must be finite and >= 0");
  require_finite(d_fake, "d_fake");
  GeneratorLoss out;
  out.adversarial = -d_fake.mean();
  auto views = apply_augmentations(images, policy, params);
  out.inversion = inversion::inversion_loss(inv_loss, target.logits(views), labels).mean();
  out.total = out.adversarial + alpha * out.inversion;
  require(std::isfinite(out.total.item<double>()), ErrorKind::kNumerical, "generator loss is not finite");
  return out;
}

GeneratorLoss generator_loss(const torch::Tensor& d_fake, const torch::Tensor& images, const torch::Tensor& labels,
                             const models::Classifier& target, const AugmentationPolicy& policy, Engine& rng,
                             double alpha, inversion::InversionLoss inv_loss) {
  return generator_loss(d_fake, images, labels, target, policy, sample_params(policy, images.size(0), rng), alpha,
                        inv_loss);
}

}  // namespace plgmi::gan
