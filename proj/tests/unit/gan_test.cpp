#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "plgmi/data/dataset_registry.hpp"
#include "plgmi/error.hpp"
#include "plgmi/gan/losses.hpp"
#include "plgmi/gan/networks.hpp"
#include "plgmi/gan/trainer.hpp"

namespace plgmi::gan {
namespace {

const data::ImageShape kShape{1, 8, 8};

models::Classifier linear_target(std::int64_t k, const data::ImageShape& shape, std::uint64_t seed = 1) {
  models::ArchitectureSpec spec{"linear", k, shape, 8};
  torch::manual_seed(seed);
  return models::Classifier(spec, models::make_network(spec));
}

double hinge(std::vector<double> real, std::vector<double> fake) {
  return discriminator_hinge_loss(torch::tensor(real), torch::tensor(fake)).item<double>();
}

TEST(Hinge, HandValues) {
  EXPECT_DOUBLE_EQ(hinge({1.0}, {-1.0}), 0.0);
  EXPECT_DOUBLE_EQ(hinge({0.0}, {0.0}), 2.0);
  EXPECT_NEAR(hinge({0.5, 2.0}, {-0.5, 1.0}), 1.5, 1e-7);
}

TEST(Hinge, NonNegativeAndZeroOnlyWhenMarginsHold) {
  torch::manual_seed(2);
  for (int i = 0; i < 50; ++i) {
    auto r = torch::randn({8}) * 2;
    auto f = torch::randn({8}) * 2;
    const double v = discriminator_hinge_loss(r, f).item<double>();
    EXPECT_GE(v, 0.0);
    const bool margins = r.ge(1).all().item<bool>() && f.le(-1).all().item<bool>();
    EXPECT_EQ(v == 0.0, margins);
  }
  EXPECT_THROW(hinge({std::nan("")}, {0.0}), Error);
}

TEST(GeneratorLoss, AlphaZeroIsAdversarialOnly) {
  auto target = linear_target(2, kShape);
  auto images = torch::rand({2, 1, 8, 8});
  Engine rng(1);
  auto g = generator_loss(torch::tensor({2.0, 4.0}), images, torch::tensor({0, 1}), target,
                          AugmentationPolicy::identity(), rng, 0.0, inversion::InversionLoss::kMaxMargin);
  EXPECT_DOUBLE_EQ(g.total.item<double>(), -3.0);
  EXPECT_DOUBLE_EQ(g.adversarial.item<double>(), -3.0);
}

TEST(GeneratorLoss, DecomposesIntoAdversarialPlusAlphaInversion) {
  auto target = linear_target(3, kShape);
  auto images = torch::rand({6, 1, 8, 8});
  auto labels = torch::tensor({0, 1, 2, 0, 1, 2});
  auto d_fake = torch::randn({6});
  AugmentationPolicy policy;
  Engine draw(42);
  auto params = sample_params(policy, 6, draw);
  for (auto loss : {inversion::InversionLoss::kCrossEntropy, inversion::InversionLoss::kMaxMargin,
                    inversion::InversionLoss::kPoincare}) {
    auto zero = generator_loss(d_fake, images, labels, target, policy, params, 0.0, loss);
    auto full = generator_loss(d_fake, images, labels, target, policy, params, 0.2, loss);
    const double diff = full.total.item<double>() - zero.total.item<double>();
    const double term = 0.2 * full.inversion.item<double>();
    EXPECT_NEAR(diff, term, 4 * std::numeric_limits<float>::epsilon() * std::max(1.0, std::abs(full.total.item<double>())));
    EXPECT_EQ(zero.inversion.item<float>(), full.inversion.item<float>());
  }
}

TEST(GeneratorLoss, NegativeAlphaRejected) {
  auto target = linear_target(2, kShape);
  Engine rng(1);
  EXPECT_THROW(generator_loss(torch::zeros({1}), torch::rand({1, 1, 8, 8}), torch::tensor({0}), target,
                              AugmentationPolicy::identity(), rng, -0.1, inversion::InversionLoss::kMaxMargin),
               Error);
}

TEST(GeneratorLoss, AlphaTermGradientMatchesFiniteDifferences) {
  torch::manual_seed(3);
  ConditionalGenerator gen(GeneratorOptions{4, 2, kShape, 4});
  gen->to(torch::kFloat64);
  gen->train();
  auto target = linear_target(2, kShape);
  target.network()->to(torch::kFloat64);
  auto z = torch::randn({4, 4}, torch::kFloat64);
  auto labels = torch::tensor({0, 1, 0, 1});
  const auto policy = AugmentationPolicy::identity();
  std::vector<AugmentationParams> params(4);
  const double alpha = 0.2;

  auto alpha_term = [&]() {
    auto images = gen->forward(z, labels);
    auto g = generator_loss(torch::zeros({4}, torch::kFloat64), images, labels, target, policy, params, alpha,
                            inversion::InversionLoss::kCrossEntropy);
    return alpha * g.inversion;
  };

  auto weight = gen->named_parameters()["project.weight"];
  auto value = alpha_term();
  auto grad = torch::autograd::grad({value}, {weight})[0];
  const double analytic = grad[3][1].item<double>();

  const double h = 1e-6;
  double up, down;
  {
    torch::NoGradGuard guard;
    weight[3][1] += h;
    up = alpha_term().item<double>();
    weight[3][1] -= 2 * h;
    down = alpha_term().item<double>();
    weight[3][1] += h;
  }
  const double numeric = (up - down) / (2 * h);
  EXPECT_NEAR(analytic, numeric, 1e-4 * std::max(std::abs(numeric), 1e-8));
}

TEST(Generator, ShapeRangeAndDeterminism) {
  torch::manual_seed(4);
  ConditionalGenerator gen(GeneratorOptions{16, 3, {1, 16, 16}, 4});
  auto z = torch::randn({5, 16}) * 10;
  auto c = torch::tensor({0, 1, 2, 0, 1});
  auto a = sample(gen, z, c);
  auto b = sample(gen, z, c);
  EXPECT_EQ(a.values.sizes(), (std::vector<std::int64_t>{5, 1, 16, 16}));
  EXPECT_GE(a.values.min().item<float>(), 0.0f);
  EXPECT_LE(a.values.max().item<float>(), 1.0f);
  EXPECT_TRUE(a.values.equal(b.values));
  auto raw = gen->forward_raw(z, c);
  EXPECT_GE(raw.min().item<float>(), -1.0f);
  EXPECT_THROW(gen->forward(z, torch::tensor({0, 1, 2, 3, 0})), Error);
  EXPECT_THROW(gen->forward(torch::randn({5, 8}), c), Error);
}

TEST(Generator, OutputSideMustBeFourTimesPowerOfTwo) {
  EXPECT_EQ(upsampling_blocks({1, 32, 32}), 3);
  EXPECT_EQ(upsampling_blocks({3, 64, 64}), 4);
  EXPECT_THROW(upsampling_blocks({1, 28, 28}), Error);
  EXPECT_THROW(upsampling_blocks({1, 32, 16}), Error);
}

TEST(SpectralNorm, PowerIterationConvergesToUnitSigma) {
  torch::manual_seed(5);
  SNLinear lin(12, 7);
  SNConv2d conv(3, 5, 3, 1);
  SNEmbedding emb(6, 9);
  std::vector<SpectralNormalized*> layers{lin.get(), conv.get(), emb.get()};
  for (auto* l : layers) {
    l->refresh_spectral_norm(50);
    EXPECT_NEAR(spectral_norm_exact(l->normalized_weight_matrix()), 1.0, 1e-4);
  }
}

TEST(Discriminator, ScoresOnePerImage) {
  torch::manual_seed(6);
  ConditionalDiscriminator d(DiscriminatorOptions{3, {1, 16, 16}, 4, 1});
  auto out = d->forward(torch::rand({4, 1, 16, 16}), torch::tensor({0, 1, 2, 0}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{4}));
  EXPECT_FALSE(d->spectral_layers().empty());
}

TEST(Training, ShortToyRunKeepsInvariants) {
  auto raw = data::make_solid_dataset(4, 16, kShape, 0.3, 7);
  auto batch = data::preprocess(raw.images, kShape);
  batch.labels = raw.labels;
  models::ArchitectureSpec spec{"intensity", 4, kShape, 1};
  models::Classifier target(spec, models::make_network(spec));
  const auto before = target.parameter_hash();

  GanConfig cfg;
  cfg.latent_dim = 8;
  cfg.g_channels = 4;
  cfg.d_channels = 4;
  cfg.batch_size = 8;
  cfg.total_iters = 12;
  cfg.seed = 9;
  double worst_sigma = 0.0;
  GanCallbacks cb;
  cb.after_d_step = [&](std::int64_t, ConditionalDiscriminator& d) {
    for (auto* l : d->spectral_layers()) {
      worst_sigma = std::max(worst_sigma, spectral_norm_exact(l->normalized_weight_matrix()));
    }
  };
  auto state = train_cgan(batch, 4, target, cfg, cb);
  EXPECT_EQ(state.history.size(), 12u);
  EXPECT_EQ(state.iteration, 12);
  EXPECT_EQ(target.parameter_hash(), before);
  EXPECT_LE(worst_sigma, 1.0 + 1e-3);

  const auto path = std::filesystem::temp_directory_path() / "plgmi_gan_test" / "gan.ckpt";
  save_gan_checkpoint(state, cfg, kShape, path);
  auto loaded = load_gan_checkpoint(path);
  EXPECT_EQ(loaded.num_classes, 4);
  EXPECT_EQ(loaded.state.iteration, 12);
  auto z = torch::randn({4, 8});
  auto c = torch::tensor({0, 1, 2, 3});
  EXPECT_TRUE(sample(state.models.generator, z, c).values.equal(sample(loaded.state.models.generator, z, c).values));

  const auto csv = path.parent_path() / "loss.csv";
  write_loss_history(state.history, csv);
  EXPECT_TRUE(std::filesystem::exists(csv));
  std::filesystem::remove_all(path.parent_path());
}

TEST(Training, RejectsEmptyClass) {
  auto raw = data::make_solid_dataset(2, 4, kShape, 0.0, 1);
  auto batch = data::preprocess(raw.images, kShape);
  batch.labels = raw.labels;
  models::ArchitectureSpec spec{"intensity", 3, kShape, 1};
  models::Classifier target(spec, models::make_network(spec));
  GanConfig cfg;
  cfg.total_iters = 1;
  EXPECT_THROW(train_cgan(batch, 3, target, cfg), Error);
}

}  // namespace
}  // namespace plgmi::gan
