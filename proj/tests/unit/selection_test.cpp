#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "plgmi/error.hpp"
#include "plgmi/selection/top_n.hpp"

namespace plgmi::selection {
namespace {

// Full stable sort of one score column, truncated at n.
std::vector<std::int64_t> brute_force(const torch::Tensor& scores, std::int64_t k, std::int64_t n) {
  auto col = scores.select(1, k).to(torch::kFloat64);
  std::vector<std::int64_t> idx(static_cast<std::size_t>(col.size(0)));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::int64_t a, std::int64_t b) { return col[a].item<double>() > col[b].item<double>(); });
  idx.resize(static_cast<std::size_t>(n));
  return idx;
}

std::vector<std::int64_t> indices(const std::vector<SelectedImage>& v) {
  std::vector<std::int64_t> out;
  for (const auto& s : v) out.push_back(s.index);
  return out;
}

TEST(TopN, HandExample) {
  auto p1 = torch::tensor({0.9, 0.1, 0.8, 0.5, 0.2}, torch::kFloat64);
  auto scores = torch::stack({1.0 - p1, p1}, 1);
  auto dr = select_top_n(scores, 2, ScoreKind::kProbability);
  // Class "1" of the one-based description is index 1 here; images #1, #3 are 0 and 2.
  EXPECT_EQ(indices(dr.per_class[1]), (std::vector<std::int64_t>{0, 2}));
  EXPECT_EQ(dr.total(), 4);
}

TEST(TopN, WholePoolWhenNEqualsPoolSize) {
  auto scores = torch::rand({7, 3}, torch::kFloat64);
  auto dr = select_top_n(scores, 7, ScoreKind::kProbability);
  for (std::int64_t k = 0; k < 3; ++k) EXPECT_EQ(indices(dr.per_class[k]), brute_force(scores, k, 7));
}

TEST(TopN, TiesBrokenByPoolIndex) {
  auto scores = torch::tensor({{0.5, 0.1}, {0.7, 0.1}, {0.5, 0.1}, {0.7, 0.1}, {0.5, 0.1}}, torch::kFloat64);
  auto dr = select_top_n(scores, 4, ScoreKind::kLogit);
  EXPECT_EQ(indices(dr.per_class[0]), (std::vector<std::int64_t>{1, 3, 0, 2}));
  EXPECT_EQ(indices(dr.per_class[1]), (std::vector<std::int64_t>{0, 1, 2, 3}));
}

TEST(TopN, MatchesBruteForceOnRandomPoolsWithTies) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const std::int64_t pool = std::uniform_int_distribution<std::int64_t>(1, 200)(rng);
    const std::int64_t k = std::uniform_int_distribution<std::int64_t>(1, 8)(rng);
    const std::int64_t n = std::uniform_int_distribution<std::int64_t>(1, pool)(rng);
    // Quantized scores force many ties.
    auto scores = torch::randint(0, 6, {pool, k}, torch::kFloat64) / 5.0;
    auto dr = select_top_n(scores, n, ScoreKind::kProbability);
    for (std::int64_t c = 0; c < k; ++c) EXPECT_EQ(indices(dr.per_class[c]), brute_force(scores, c, n));
  }
}

TEST(TopN, PrefixStableWhenNGrows) {
  auto scores = torch::rand({50, 4}, torch::kFloat64);
  auto small = select_top_n(scores, 10, ScoreKind::kProbability);
  auto large = select_top_n(scores, 30, ScoreKind::kProbability);
  for (int k = 0; k < 4; ++k) {
    auto a = indices(small.per_class[k]);
    auto b = indices(large.per_class[k]);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(TopN, Errors) {
  auto scores = torch::rand({5, 2});
  EXPECT_THROW(select_top_n(scores, 6, ScoreKind::kProbability), Error);
  EXPECT_THROW(select_top_n(scores, 0, ScoreKind::kProbability), Error);
  auto bad = scores.clone();
  bad[0][0] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(select_top_n(bad, 2, ScoreKind::kProbability), Error);
}

TEST(Summary, DuplicateCounts) {
  PseudoLabeledDataset none;
  none.n = 1;
  none.per_class = {{{0, 0.9}}, {{1, 0.8}}};
  EXPECT_EQ(selection_summary(none).duplicate_count, 0);
  EXPECT_EQ(selection_summary(none).unique_images, 2);

  PseudoLabeledDataset triple;
  triple.n = 1;
  triple.per_class = {{{4, 0.9}}, {{4, 0.8}}, {{4, 0.7}}};
  EXPECT_EQ(selection_summary(triple).duplicate_count, 2);
}

TEST(Summary, MinScoreIsNthLargest) {
  auto scores = torch::rand({40, 3}, torch::kFloat64);
  auto dr = select_top_n(scores, 6, ScoreKind::kProbability);
  auto s = selection_summary(dr);
  for (int k = 0; k < 3; ++k) {
    auto sorted = std::get<0>(scores.select(1, k).sort(0, true));
    EXPECT_DOUBLE_EQ(s.min_score[k], sorted[5].item<double>());
  }
}

TEST(Assign, ScoresRecomputableFromTarget) {
  models::ArchitectureSpec spec{"linear", 3, {1, 4, 4}, 8};
  torch::manual_seed(1);
  models::Classifier target(spec, models::make_network(spec));
  data::ImageBatch pool{torch::rand({30, 1, 4, 4}), std::nullopt};
  auto dr = assign_pseudo_labels(pool, target, 5, 3);
  auto probs = target.predict_probs(pool).to(torch::kFloat64);
  for (int k = 0; k < 3; ++k) {
    for (const auto& s : dr.per_class[k]) EXPECT_NEAR(probs[s.index][k].item<double>(), s.score, 1e-6);
  }
  EXPECT_THROW(assign_pseudo_labels(pool, target, 5, 4), Error);

  auto flat = materialize(dr, pool);
  EXPECT_EQ(flat.size(), 15);
  EXPECT_TRUE(flat.labels->bincount().equal(torch::tensor({5, 5, 5}, torch::kInt64)));
}

TEST(Assign, SaveLoadRoundTrip) {
  auto scores = torch::rand({20, 2}, torch::kFloat64);
  auto dr = select_top_n(scores, 4, ScoreKind::kLogit);
  const auto path = std::filesystem::temp_directory_path() / "plgmi_selection_test.json";
  save_selection(dr, path);
  auto back = load_selection(path);
  EXPECT_EQ(back.n, 4);
  EXPECT_EQ(back.score_kind, ScoreKind::kLogit);
  for (int k = 0; k < 2; ++k) {
    EXPECT_EQ(indices(back.per_class[k]), indices(dr.per_class[k]));
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(back.per_class[k][i].score, dr.per_class[k][i].score);
  }
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace plgmi::selection
