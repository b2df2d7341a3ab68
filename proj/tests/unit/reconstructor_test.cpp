#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "plgmi/attack/reconstructor.hpp"
#include "plgmi/error.hpp"
#include "plgmi/util/hash.hpp"

namespace plgmi::attack {
namespace {

const data::ImageShape kShape{1, 8, 8};

std::string module_hash(torch::nn::Module& m) {
  util::Sha256 h;
  for (const auto& p : m.named_parameters()) h.update(p.key()).update(p.value());
  for (const auto& b : m.named_buffers()) h.update(b.key()).update(b.value());
  return h.hex();
}

models::Classifier intensity_target(std::int64_t k) {
  models::ArchitectureSpec spec{"intensity", k, kShape, 1};
  return models::Classifier(spec, models::make_network(spec));
}

models::Classifier linear_target(std::int64_t k) {
  models::ArchitectureSpec spec{"linear", k, kShape, 1};
  torch::manual_seed(11);
  return models::Classifier(spec, models::make_network(spec));
}

gan::ConditionalGenerator small_generator(std::int64_t k) {
  torch::manual_seed(12);
  gan::ConditionalGenerator g(gan::GeneratorOptions{6, k, kShape, 4});
  g->eval();
  return g;
}

// G(z, c) = codebook[argmax(z)]: constant images at fixed intensities, with a
// zero-gradient dependence on z so the optimizer leaves z where it started.
class CodebookGenerator : public gan::ConditionalGeneratorImpl {
 public:
  CodebookGenerator(std::int64_t k, std::vector<double> levels)
      : gan::ConditionalGeneratorImpl(gan::GeneratorOptions{static_cast<std::int64_t>(levels.size()), k, kShape, 1}),
        levels_(torch::tensor(levels, torch::kFloat32)) {}

  torch::Tensor forward_raw(const torch::Tensor& z, const torch::Tensor&) override {
    auto pick = levels_.index_select(0, z.detach().argmax(1));
    auto img = pick.view({-1, 1, 1, 1}).expand({z.size(0), 1, 8, 8}) * 2.0 - 1.0;
    return img + 0.0 * z.sum(1).view({-1, 1, 1, 1});
  }

  std::int64_t bin(const torch::Tensor& z) const { return z.argmax().item<std::int64_t>(); }
  double level(std::int64_t i) const { return levels_[i].item<double>(); }

 private:
  torch::Tensor levels_;
};

ReconstructConfig quick_config() {
  ReconstructConfig cfg;
  cfg.restarts = 3;
  cfg.iterations = 15;
  cfg.views = 2;
  cfg.lr = 0.05;
  return cfg;
}

TEST(Objective, SingleIdentityViewReducesToPlainLoss) {
  auto gen = small_generator(3);
  auto target = linear_target(3);
  ReconstructConfig cfg;
  cfg.views = 1;
  cfg.policy = gan::AugmentationPolicy::identity();
  auto z = torch::randn({4, 6});
  auto c = torch::tensor({0, 1, 2, 1});
  std::vector<gan::Engine> rngs(4);
  auto obj = multi_view_objective(gen, target, z, c, cfg, rngs);
  auto plain = inversion::inversion_loss(cfg.loss, target.logits(gen->forward(z, c)), c);
  EXPECT_TRUE(obj.equal(plain));

  cfg.views = 3;
  auto tripled = multi_view_objective(gen, target, z, c, cfg, rngs);
  EXPECT_TRUE(torch::allclose(tripled, 3 * plain, 1e-5, 1e-6));
}

TEST(Reconstruct, CodebookOptimumMatchesExhaustiveSearch) {
  const std::vector<double> levels{0.05, 0.2, 0.33, 0.41, 0.58, 0.66, 0.8, 0.97};
  auto impl = std::make_shared<CodebookGenerator>(4, levels);
  gan::ConditionalGenerator gen(std::static_pointer_cast<gan::ConditionalGeneratorImpl>(impl));
  auto target = intensity_target(4);
  ReconstructConfig cfg;
  cfg.policy = gan::AugmentationPolicy::identity();
  cfg.views = 1;
  cfg.iterations = 5;
  cfg.restarts = 64;

  for (std::int64_t c = 0; c < 4; ++c) {
    double best = std::numeric_limits<double>::infinity();
    for (double l : levels) {
      auto img = torch::full({1, 1, 8, 8}, static_cast<float>(l));
      best = std::min(best, inversion::inversion_loss(cfg.loss, target.logits(img), torch::tensor({c}))
                                .item<double>());
    }
    auto res = reconstruct(gen, target, c, 100 + static_cast<std::uint64_t>(c), cfg);
    EXPECT_NEAR(res.best_objective(), best, 1e-5);
    auto img = torch::full({1, 1, 8, 8}, static_cast<float>(impl->level(impl->bin(res.z_star))));
    EXPECT_TRUE(torch::allclose(res.x_star.unsqueeze(0), img, 0, 1e-6));
  }
}

TEST(Reconstruct, SelectsMinimumFinalObjectiveAndKeepsModelsFrozen) {
  auto gen = small_generator(3);
  auto target = linear_target(3);
  const auto g_before = module_hash(*gen);
  const auto t_before = target.parameter_hash();
  auto res = reconstruct(gen, target, 1, 5, quick_config());
  EXPECT_EQ(module_hash(*gen), g_before);
  EXPECT_EQ(target.parameter_hash(), t_before);

  ASSERT_TRUE(res.ok());
  ASSERT_EQ(res.restarts.size(), 3u);
  for (const auto& r : res.restarts) {
    EXPECT_GE(r.final_objective, res.best_objective());
    EXPECT_EQ(r.curve.size(), 15u);
    for (std::size_t i = 1; i < r.running_min.size(); ++i) EXPECT_LE(r.running_min[i], r.running_min[i - 1]);
    EXPECT_EQ(r.z.size(0), 6);
    EXPECT_TRUE(torch::isfinite(r.z).all().item<bool>());
  }
  EXPECT_GE(res.x_star.min().item<float>(), 0.0f);
  EXPECT_LE(res.x_star.max().item<float>(), 1.0f);
}

TEST(Reconstruct, PermutingRestartSeedsPermutesOutcomes) {
  auto gen = small_generator(3);
  auto target = linear_target(3);
  std::vector<std::uint64_t> seeds{7, 8, 9, 10};
  auto a = reconstruct_with_seeds(gen, target, 2, seeds, quick_config());
  std::reverse(seeds.begin(), seeds.end());
  auto b = reconstruct_with_seeds(gen, target, 2, seeds, quick_config());
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.restarts[i].seed, b.restarts[3 - i].seed);
    EXPECT_NEAR(a.restarts[i].final_objective, b.restarts[3 - i].final_objective,
                1e-5 * std::max(1.0, std::abs(a.restarts[i].final_objective)));
  }
  EXPECT_NEAR(a.best_objective(), b.best_objective(), 1e-5 * std::max(1.0, std::abs(a.best_objective())));
}

TEST(Reconstruct, RerunIsDeterministic) {
  auto gen = small_generator(2);
  auto target = linear_target(2);
  auto a = reconstruct(gen, target, 0, 77, quick_config());
  auto b = reconstruct(gen, target, 0, 77, quick_config());
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.best_objective(), b.best_objective());
  EXPECT_TRUE(a.x_star.equal(b.x_star));
}

TEST(Reconstruct, InvalidRequests) {
  auto gen = small_generator(3);
  auto target = linear_target(3);
  auto cfg = quick_config();
  EXPECT_THROW(reconstruct(gen, target, 3, 0, cfg), Error);
  cfg.views = 0;
  EXPECT_THROW(reconstruct(gen, target, 0, 0, cfg), Error);
  cfg = quick_config();
  cfg.restarts = 0;
  EXPECT_THROW(reconstruct(gen, target, 0, 0, cfg), Error);
  EXPECT_THROW(reconstruct(gen, linear_target(2), 0, 0, quick_config()), Error);
}

TEST(BatchAttack, CountsSeedsAndResume) {
  auto gen = small_generator(3);
  auto target = linear_target(3);
  auto cfg = quick_config();
  cfg.restarts = 2;
  const auto dir = std::filesystem::temp_directory_path() / "plgmi_batch_attack_test";
  std::filesystem::remove_all(dir);
  BatchAttackOptions opts{3, 1, dir, true};

  EXPECT_TRUE(batch_attack(gen, target, {}, 4, cfg, opts).empty());
  auto first = batch_attack(gen, target, {0, 2}, 3, cfg, opts);
  ASSERT_EQ(first.size(), 6u);
  EXPECT_EQ(first[3].target_class, 2);
  std::set<std::uint64_t> seeds;
  for (const auto& r : first) seeds.insert(r.seed);
  EXPECT_EQ(seeds.size(), 6u);
  EXPECT_TRUE(std::filesystem::exists(dir / "index.csv"));

  // A second call reads every result back from disk.
  auto second = batch_attack(gen, target, {0, 2}, 3, cfg, opts);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(second[i].seed, first[i].seed);
    EXPECT_EQ(second[i].best_objective(), first[i].best_objective());
    EXPECT_TRUE(second[i].x_star.equal(first[i].x_star));
    EXPECT_EQ(second[i].restarts[0].curve, first[i].restarts[0].curve);
  }

  opts.resume = false;
  opts.output_dir.reset();
  opts.jobs = 2;
  auto fresh = batch_attack(gen, target, {0, 2}, 3, cfg, opts);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(fresh[i].best_objective(), first[i].best_objective(), 1e-5);
  std::filesystem::remove_all(dir);
}

TEST(ViewConsistency, PerfectImagesPassEveryView) {
  auto target = intensity_target(4);
  auto images = torch::full({4, 1, 8, 8}, 0.0f);
  for (int k = 0; k < 4; ++k) images[k].fill_((k + 0.5f) / 4.0f);
  gan::Engine rng(1);
  auto hits = view_consistency(target, images, torch::tensor({0, 1, 2, 3}), gan::AugmentationPolicy::flip_only(0.5),
                               3, rng);
  EXPECT_TRUE(hits.eq(3).all().item<bool>());
}

}  // namespace
}  // namespace plgmi::attack
