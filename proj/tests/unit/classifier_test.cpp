#include <gtest/gtest.h>

#include <filesystem>

#include "plgmi/data/dataset_registry.hpp"
#include "plgmi/error.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::models {
namespace {

const data::ImageShape kShape{1, 16, 16};

data::ImageBatch solid_batch(std::int64_t labels, std::int64_t per_label, std::uint64_t seed) {
  auto raw = data::make_solid_dataset(labels, per_label, kShape, 0.2, seed);
  auto b = data::preprocess(raw.images, kShape);
  b.labels = raw.labels;
  return b;
}

TEST(Architectures, EveryKnownIdBuildsAndHasConsistentShapes) {
  for (const auto& id : known_architectures()) {
    ArchitectureSpec spec{id, 3, {3, 32, 32}, 4};
    torch::manual_seed(1);
    Classifier model(spec, make_network(spec));
    auto x = torch::rand({2, 3, 32, 32});
    auto logits = model.logits(x);
    EXPECT_EQ(logits.sizes(), (std::vector<std::int64_t>{2, 3})) << id;
    EXPECT_EQ(model.features(x).size(1), model.feature_dim()) << id;
    auto probs = model.predict_probs({x, std::nullopt});
    EXPECT_TRUE(torch::allclose(probs.sum(1), torch::ones({2}, probs.options()), 1e-5, 1e-6)) << id;
  }
  EXPECT_THROW(make_network({"transformer", 3, kShape, 4}), Error);
}

TEST(Classifier, ParametersFrozenButInputGradientsFlow) {
  ArchitectureSpec spec{"resnet-s", 4, kShape, 4};
  Classifier model(spec, make_network(spec));
  for (const auto& p : model.network()->parameters()) EXPECT_FALSE(p.requires_grad());
  auto x = torch::rand({3, 1, 16, 16}).requires_grad_(true);
  model.logits(x).sum().backward();
  EXPECT_GT(x.grad().abs().sum().item<float>(), 0.0f);
  EXPECT_THROW(model.logits(torch::rand({3, 1, 8, 8})), Error);
}

TEST(Classifier, DuplicateRowsGetIdenticalScores) {
  ArchitectureSpec spec{"vgg-s", 5, kShape, 4};
  Classifier model(spec, make_network(spec));
  auto x = torch::rand({4, 1, 16, 16});
  auto dup = torch::cat({x, x});
  auto p = model.predict_probs({dup, std::nullopt});
  EXPECT_TRUE(p.slice(0, 0, 4).equal(p.slice(0, 4, 8)));
}

TEST(Training, SeparableToyIsLearnedAndCheckpointRoundTrips) {
  auto train = solid_batch(3, 20, 1);
  auto val = solid_batch(3, 10, 2);
  ArchitectureSpec spec{"linear", 3, kShape, 1};
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.weight_decay = 0.0;
  cfg.seed = 3;
  auto trained = train_classifier(train, val, spec, cfg);
  EXPECT_GE(trained.report.train_accuracy, 0.95);
  ASSERT_TRUE(trained.report.validation_accuracy.has_value());
  EXPECT_DOUBLE_EQ(accuracy(trained.model, train), trained.report.train_accuracy);

  const auto path = std::filesystem::temp_directory_path() / "plgmi_classifier_test" / "m.pt";
  save_classifier(trained.model, {"target", spec, trained.model.feature_dim(), 3, "h", trained.report}, path);
  auto [loaded, meta] = load_classifier(path);
  EXPECT_EQ(loaded.parameter_hash(), trained.model.parameter_hash());
  EXPECT_EQ(meta.role, "target");
  EXPECT_EQ(meta.dataset_hash, "h");
  EXPECT_TRUE(loaded.predict_logits(val).equal(trained.model.predict_logits(val)));
  std::filesystem::remove_all(path.parent_path());
}

TEST(Training, SameSeedSameModel) {
  auto train = solid_batch(2, 8, 4);
  ArchitectureSpec spec{"resnet-s", 2, kShape, 4};
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.seed = 9;
  auto a = train_classifier(train, std::nullopt, spec, cfg);
  auto b = train_classifier(train, std::nullopt, spec, cfg);
  EXPECT_EQ(a.model.parameter_hash(), b.model.parameter_hash());
}

TEST(Training, RejectsBadLabels) {
  auto train = solid_batch(3, 4, 1);
  ArchitectureSpec spec{"linear", 2, kShape, 1};
  EXPECT_THROW(train_classifier(train, std::nullopt, spec, {}), Error);
  spec.num_classes = 1;
  EXPECT_THROW(train_classifier(solid_batch(1, 4, 1), std::nullopt, spec, {}), Error);
  train.labels.reset();
  spec.num_classes = 3;
  EXPECT_THROW(train_classifier(train, std::nullopt, spec, {}), Error);
}

TEST(Intensity, ScoresNearestLevel) {
  ArchitectureSpec spec{"intensity", 4, kShape, 1};
  Classifier model(spec, make_network(spec));
  auto x = torch::stack({torch::full({1, 16, 16}, 0.1f), torch::full({1, 16, 16}, 0.6f)});
  auto pred = model.logits(x).argmax(1);
  EXPECT_EQ(pred[0].item<std::int64_t>(), 0);
  EXPECT_EQ(pred[1].item<std::int64_t>(), 2);
  EXPECT_EQ(model.feature_dim(), 1);
}

}  // namespace
}  // namespace plgmi::models
