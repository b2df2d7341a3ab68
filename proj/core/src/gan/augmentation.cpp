#include "plgmi/gan/augmentation.hpp"

#include <cmath>
#include <numbers>

#include "plgmi/error.hpp"

namespace plgmi::gan {
namespace {

namespace F = torch::nn::functional;

double uniform(Engine& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

torch::Tensor per_image(const std::vector<AugmentationParams>& params, double AugmentationParams::*field) {
  std::vector<float> v;
  v.reserve(params.size());
  for (const auto& p : params) v.push_back(static_cast<float>(p.*field));
  return torch::tensor(v).view({-1, 1, 1, 1});
}

torch::Tensor grayscale(const torch::Tensor& x) {
  if (x.size(1) != 3) return x.mean(1, true);
  return 0.299 * x.select(1, 0).unsqueeze(1) + 0.587 * x.select(1, 1).unsqueeze(1) +
         0.114 * x.select(1, 2).unsqueeze(1);
}

torch::Tensor geometric(const torch::Tensor& x, const std::vector<AugmentationParams>& params) {
  // Output coordinate p maps to input coordinate R(theta) * (s * p) + t.
  std::vector<float> theta;
  theta.reserve(params.size() * 6);
  for (const auto& p : params) {
    const double c = std::cos(p.rotation_rad), s = std::sin(p.rotation_rad);
    const double k = p.crop_scale;
    theta.insert(theta.end(), {static_cast<float>(c * k), static_cast<float>(-s * k), static_cast<float>(p.crop_dx),
                               static_cast<float>(s * k), static_cast<float>(c * k), static_cast<float>(p.crop_dy)});
  }
  auto t = torch::tensor(theta).view({-1, 2, 3});
  auto grid = F::affine_grid(t, x.sizes().vec(), /*align_corners=*/false);
  return F::grid_sample(x, grid,
                        F::GridSampleFuncOptions().mode(torch::kBilinear).padding_mode(torch::kBorder).align_corners(
                            false));
}

}  // namespace

AugmentationPolicy AugmentationPolicy::identity() {
  AugmentationPolicy p;
  p.crop.enabled = p.flip.enabled = p.rotation.enabled = p.jitter.enabled = false;
  return p;
}

AugmentationPolicy AugmentationPolicy::flip_only(double probability) {
  auto p = identity();
  p.flip.enabled = true;
  p.flip.probability = probability;
  return p;
}

bool AugmentationPolicy::any() const { return crop.enabled || flip.enabled || rotation.enabled || jitter.enabled; }

AugmentationParams sample_params(const AugmentationPolicy& policy, Engine& rng) {
  AugmentationParams p;
  if (policy.crop.enabled) {
    require(policy.crop.min_scale > 0.0 && policy.crop.min_scale <= policy.crop.max_scale && policy.crop.max_scale <= 1.0,
            ErrorKind::kInvalidArgument, "crop scale range must satisfy 0 < min <= max <= 1");
    p.crop_scale = std::sqrt(uniform(rng, policy.crop.min_scale, policy.crop.max_scale));
    const double room = 1.0 - p.crop_scale;
    p.crop_dx = uniform(rng, -room, room);
    p.crop_dy = uniform(rng, -room, room);
  }
  if (policy.flip.enabled) p.flip = uniform(rng, 0.0, 1.0) < policy.flip.probability;
  if (policy.rotation.enabled) {
    const double deg = uniform(rng, -policy.rotation.max_degrees, policy.rotation.max_degrees);
    p.rotation_rad = deg * std::numbers::pi / 180.0;
  }
  if (policy.jitter.enabled) {
    const auto& j = policy.jitter;
    p.brightness = uniform(rng, std::max(0.0, 1.0 - j.brightness), 1.0 + j.brightness);
    p.contrast = uniform(rng, std::max(0.0, 1.0 - j.contrast), 1.0 + j.contrast);
    p.saturation = uniform(rng, std::max(0.0, 1.0 - j.saturation), 1.0 + j.saturation);
  }
  return p;
}

std::vector<AugmentationParams> sample_params(const AugmentationPolicy& policy, std::int64_t count, Engine& rng) {
  std::vector<AugmentationParams> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) out.push_back(sample_params(policy, rng));
  return out;
}

torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy,
                                  const std::vector<AugmentationParams>& params) {
  require(images.dim() == 4, ErrorKind::kInvalidArgument, "augmentation expects N x C x H x W images");
  require(static_cast<std::int64_t>(params.size()) == images.size(0), ErrorKind::kInvalidArgument,
          "one augmentation draw per image is required");
  if (!policy.any() || images.size(0) == 0) return images;

  auto x = images;
  if (policy.crop.enabled || policy.rotation.enabled) x = geometric(x, params);
  if (policy.flip.enabled) {
    std::vector<std::int64_t> rows;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].flip) rows.push_back(static_cast<std::int64_t>(i));
    }
    if (!rows.empty()) {
      auto mask = torch::zeros({x.size(0)}, torch::kBool);
      mask.index_put_({torch::tensor(rows)}, true);
      x = torch::where(mask.view({-1, 1, 1, 1}), torch::flip(x, {3}), x);
    }
  }
  if (policy.jitter.enabled) {
    x = x * per_image(params, &AugmentationParams::brightness);
    x = x.clamp(0.0, 1.0);
    auto mean = grayscale(x).mean({1, 2, 3}, true);
    x = ((x - mean) * per_image(params, &AugmentationParams::contrast) + mean).clamp(0.0, 1.0);
    if (x.size(1) == 3) {
      auto gray = grayscale(x);
      x = ((x - gray) * per_image(params, &AugmentationParams::saturation) + gray).clamp(0.0, 1.0);
    }
  }
  return x.clamp(0.0, 1.0);
}

torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy, Engine& rng) {
  return apply_augmentations(images, policy, sample_params(policy, images.size(0), rng));
}

torch::Tensor apply_augmentations(const torch::Tensor& images, const AugmentationPolicy& policy,
                                  std::vector<Engine>& rngs) {
  require(static_cast<std::int64_t>(rngs.size()) == images.size(0), ErrorKind::kInvalidArgument,
          "one engine per image is required");
  std::vector<AugmentationParams> params;
  params.reserve(rngs.size());
  for (auto& r : rngs) params.push_back(sample_params(policy, r));
  return apply_augmentations(images, policy, params);
}

data::ImageBatch apply_augmentations(const data::ImageBatch& batch, const AugmentationPolicy& policy, Engine& rng) {
  return {apply_augmentations(batch.values, policy, rng), batch.labels};
}

}  // namespace plgmi::gan
