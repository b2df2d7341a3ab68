#include <gtest/gtest.h>

#include "plgmi/error.hpp"
#include "plgmi/gan/augmentation.hpp"

namespace plgmi::gan {
namespace {

TEST(Augmentation, IdentityPolicyReturnsInput) {
  auto x = torch::rand({3, 3, 8, 8});
  Engine rng(1);
  auto y = apply_augmentations(x, AugmentationPolicy::identity(), rng);
  EXPECT_TRUE(y.equal(x));
}

TEST(Augmentation, FlipIsAnInvolution) {
  auto x = torch::rand({4, 1, 6, 6});
  Engine rng(2);
  const auto flip = AugmentationPolicy::flip_only(1.0);
  auto once = apply_augmentations(x, flip, rng);
  EXPECT_TRUE(once.equal(torch::flip(x, {3})));
  auto twice = apply_augmentations(once, flip, rng);
  EXPECT_TRUE(twice.equal(x));
}

TEST(Augmentation, CropKeepsConstantImagesConstant) {
  auto policy = AugmentationPolicy::identity();
  policy.crop.enabled = true;
  policy.crop.min_scale = 0.9;
  policy.crop.max_scale = 1.0;
  auto x = torch::full({5, 3, 16, 16}, 0.37f);
  Engine rng(3);
  auto y = apply_augmentations(x, policy, rng);
  EXPECT_LT((y - 0.37f).abs().max().item<float>(), 1e-6f);
}

TEST(Augmentation, FullPolicyStaysInUnitRangeWithSameShape) {
  AugmentationPolicy policy;
  policy.jitter.brightness = 0.9;
  auto x = torch::rand({16, 3, 12, 12});
  Engine rng(4);
  for (int i = 0; i < 5; ++i) {
    auto y = apply_augmentations(x, policy, rng);
    EXPECT_EQ(y.sizes(), x.sizes());
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
  }
}

TEST(Augmentation, SameDrawsSameOutputDifferentDrawsDiffer) {
  AugmentationPolicy policy;
  auto x = torch::rand({2, 1, 16, 16});
  Engine a(5), b(5), c(6);
  auto ya = apply_augmentations(x, policy, a);
  auto yb = apply_augmentations(x, policy, b);
  auto yc = apply_augmentations(x, policy, c);
  EXPECT_TRUE(ya.equal(yb));
  EXPECT_FALSE(ya.equal(yc));
}

TEST(Augmentation, PerRowEnginesMatchPerRowDraws) {
  AugmentationPolicy policy;
  auto x = torch::rand({3, 1, 8, 8});
  std::vector<Engine> rows{Engine(1), Engine(2), Engine(3)};
  auto joint = apply_augmentations(x, policy, rows);
  for (int i = 0; i < 3; ++i) {
    Engine single(static_cast<std::uint64_t>(i + 1));
    auto alone = apply_augmentations(x.slice(0, i, i + 1), policy, single);
    EXPECT_TRUE(torch::allclose(joint.slice(0, i, i + 1), alone, 1e-6, 1e-6));
  }
}

TEST(Augmentation, GradientsFlowToImages) {
  AugmentationPolicy policy;
  auto x = (torch::rand({2, 3, 8, 8}) * 0.5 + 0.25).requires_grad_(true);
  Engine rng(7);
  auto y = apply_augmentations(x, policy, rng);
  y.sum().backward();
  EXPECT_GT(x.grad().abs().sum().item<float>(), 0.0f);
}

TEST(Augmentation, ParameterRanges) {
  AugmentationPolicy policy;
  Engine rng(8);
  for (const auto& p : sample_params(policy, 200, rng)) {
    EXPECT_GE(p.crop_scale, std::sqrt(0.8) - 1e-12);
    EXPECT_LE(p.crop_scale, 1.0);
    EXPECT_LE(std::abs(p.crop_dx), 1.0 - p.crop_scale + 1e-12);
    EXPECT_LE(std::abs(p.rotation_rad), 10.0 * M_PI / 180.0 + 1e-12);
    EXPECT_GE(p.brightness, 0.8);
    EXPECT_LE(p.brightness, 1.2);
  }
  policy.crop.min_scale = 0.0;
  EXPECT_THROW(sample_params(policy, rng), Error);
}

TEST(Augmentation, CountMismatchRejected) {
  EXPECT_THROW(apply_augmentations(torch::rand({2, 1, 4, 4}), AugmentationPolicy{}, std::vector<AugmentationParams>(1)),
               Error);
}

}  // namespace
}  // namespace plgmi::gan
