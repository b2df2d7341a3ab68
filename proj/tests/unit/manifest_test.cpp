#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "plgmi/error.hpp"
#include "plgmi/experiment/manifest.hpp"

namespace plgmi::experiment {
namespace {

TEST(Manifest, JsonRoundTripPreservesEverything) {
  auto m = RunManifest::defaults();
  m.run_id = "rt";
  m.seed = 1234;
  m.data.max_private = 77;
  m.gan.alpha = 0.35;
  m.attack.reconstruct.loss = inversion::InversionLoss::kPoincare;
  m.attack.reconstruct.policy.rotation.enabled = false;
  m.reuse["gan"] = "other";
  m.stages["select"] = {"abc", {{"selections/rt/top_n.json", "ff"}}};
  const auto j = to_json(m);
  const auto back = manifest_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(m));

  const auto path = std::filesystem::temp_directory_path() / "plgmi_manifest_test.json";
  save_manifest(m, path);
  EXPECT_EQ(to_json(load_manifest(path)), j);
  std::filesystem::remove(path);
}

TEST(Manifest, UnknownKeysRejectedMissingKeysDefaulted) {
  auto j = to_json(RunManifest::defaults());
  j["gan"]["alphaa"] = 0.1;
  EXPECT_THROW(manifest_from_json(j), Error);
  auto partial = nlohmann::json{{"run_id", "p"}, {"gan", {{"alpha", 0.5}}}};
  auto m = manifest_from_json(partial);
  EXPECT_EQ(m.run_id, "p");
  EXPECT_DOUBLE_EQ(m.gan.alpha, 0.5);
  EXPECT_EQ(m.gan.total_iters, RunManifest::defaults().gan.total_iters);
}

TEST(Manifest, InvalidValuesRejected) {
  auto j = to_json(RunManifest::defaults());
  j["gan"]["alpha"] = -0.1;
  EXPECT_THROW(manifest_from_json(j), Error);
  j = to_json(RunManifest::defaults());
  j["attack"]["inv_loss"] = "hinge";
  EXPECT_THROW(manifest_from_json(j), Error);
}

TEST(Manifest, HashTracksConfigurationButNotBookkeeping) {
  const auto base = RunManifest::defaults();
  const auto h = config_hash(base);
  auto m = base;
  m.seed += 1;
  EXPECT_NE(config_hash(m), h);
  m = base;
  m.selection.n += 1;
  EXPECT_NE(config_hash(m), h);
  m = base;
  m.attack.reconstruct.views = 3;
  EXPECT_NE(config_hash(m), h);
  m = base;
  m.stages["x"] = {"y", {}};
  m.paths["report"] = "somewhere";
  EXPECT_EQ(config_hash(m), h);
}

TEST(Manifest, StageSeedsAreDistinctAndFollowRunSeed) {
  auto m = RunManifest::defaults();
  std::set<std::uint64_t> seeds;
  for (auto s : {SeedScope::kSplit, SeedScope::kTarget, SeedScope::kEval, SeedScope::kGan, SeedScope::kAttack,
                 SeedScope::kAnalyze}) {
    seeds.insert(stage_seed(m, s));
  }
  EXPECT_EQ(seeds.size(), 6u);
  const auto before = stage_seed(m, SeedScope::kGan);
  EXPECT_EQ(stage_seed(m, SeedScope::kGan), before);
  m.seed = 99;
  EXPECT_NE(stage_seed(m, SeedScope::kGan), before);
}

}  // namespace
}  // namespace plgmi::experiment
