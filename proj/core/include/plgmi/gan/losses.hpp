#pragma once

#include <torch/torch.h>

#include <vector>

#include "plgmi/gan/augmentation.hpp"
#include "plgmi/inversion/losses.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::gan {

// mean(max(0, 1 - d_real)) + mean(max(0, 1 + d_fake)).
torch::Tensor discriminator_hinge_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake);

struct GeneratorLoss {
  torch::Tensor total;        // adversarial + alpha * inversion
  torch::Tensor adversarial;  // -mean(d_fake)
  torch::Tensor inversion;    // mean L_inv over the batch, before alpha
};

// images are the generator output in [0, 1]; one augmentation draw per image.
GeneratorLoss generator_loss(const torch::Tensor& d_fake, const torch::Tensor& images, const torch::Tensor& labels,
                             const models::Classifier& target, const AugmentationPolicy& policy,
                             const std::vector<AugmentationParams>& params, double alpha,
                             inversion::InversionLoss inv_loss);
GeneratorLoss generator_loss(const torch::Tensor& d_fake, const torch::Tensor& images, const torch::Tensor& labels,
                             const models::Classifier& target, const AugmentationPolicy& policy, Engine& rng,
                             double alpha, inversion::InversionLoss inv_loss);

}  // namespace plgmi::gan
