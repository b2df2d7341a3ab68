#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <random>
#include <vector>

#include "plgmi/data/image_batch.hpp"

namespace plgmi::gan {

using Engine = std::mt19937_64;

struct CropSpec {
  bool enabled = true;
  double min_scale = 0.8;  // fraction of the image area kept
  double max_scale = 1.0;
};

struct FlipSpec {
  bool enabled = true;
  double probability = 0.5;
};

struct RotationSpec {
  bool enabled = true;
  double max_degrees = 10.0;
};

struct JitterSpec {
  bool enabled = true;
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
};

// Applied in order: crop, flip, rotation, color jitter.
struct AugmentationPolicy {
  CropSpec crop;
  FlipSpec flip;
  RotationSpec rotation;
  JitterSpec jitter;

  static AugmentationPolicy identity();
  static AugmentationPolicy flip_only(double probability);
  bool any() const;
};

// Per-image draw of the random transform.
struct AugmentationParams {
  double crop_scale = 1.0;  // side length fraction
  double crop_dx = 0.0;     // crop centre offset, normalized coordinates
  double crop_dy = 0.0;
  bool flip = false;
  double rotation_rad = 0.0;
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
};

AugmentationParams sample_params(const AugmentationPolicy& policy, Engine& rng);
std::vector<AugmentationParams> sample_params(const AugmentationPolicy& policy, std::int64_t count, Engine& rng);

// Differentiable with respect to images (N x C x H x W in [0, 1]); the output
// has the same shape and stays in [0, 1].
torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy,
                                  const std::vector<AugmentationParams>& params);
torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy, Engine& rng);
// Draws one transform per image from its own engine.
torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy,
                                  std::vector<Engine>& rngs);
data::ImageBatch apply_augmentations(const data::ImageBatch& batch, const AugmentationPolicy& policy, Engine& rng);

}  // namespace plgmi::gan
