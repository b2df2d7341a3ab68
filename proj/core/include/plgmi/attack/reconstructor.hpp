#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plgmi/gan/augmentation.hpp"
#include "plgmi/gan/networks.hpp"
#include "plgmi/inversion/losses.hpp"
#include "plgmi/inversion/trend.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::attack {

struct ReconstructConfig {
  std::int64_t restarts = 5;
  std::int64_t iterations = 600;
  std::int64_t views = 2;  // m augmented views per step
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  gan::AugmentationPolicy policy;
  inversion::InversionLoss loss = inversion::InversionLoss::kMaxMargin;
  std::int64_t chunk_rows = 512;  // latent rows optimized together
};

struct RestartResult {
  std::uint64_t seed = 0;
  torch::Tensor z;  // final latent, length latent_dim
  double final_objective = std::numeric_limits<double>::infinity();
  std::vector<double> curve;        // objective at every iteration
  std::vector<double> running_min;  // best-so-far of curve
  std::optional<std::string> failure;
};

struct AttackResult {
  std::int64_t target_class = 0;
  std::uint64_t seed = 0;  // the attack seed restart seeds derive from
  std::vector<RestartResult> restarts;
  std::int64_t best = -1;         // index into restarts
  torch::Tensor z_star;           // latent_dim
  torch::Tensor x_star;           // C x H x W in [0, 1]
  torch::Tensor x_all;            // R x C x H x W, failed restarts zero-filled
  std::optional<std::string> error;  // set when every restart failed

  bool ok() const { return !error.has_value(); }
  double best_objective() const { return ok() ? restarts[static_cast<std::size_t>(best)].final_objective : NAN; }
};

std::uint64_t restart_seed(std::uint64_t attack_seed, std::int64_t restart);

// Sum over m augmented views of L_inv(T(A_i(G(z, c))), c), one value per row of
// z. View draws come from the given engines, one per row.
torch::Tensor multi_view_objective(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                   const torch::Tensor& z, const torch::Tensor& classes, const ReconstructConfig& cfg,
                                   std::vector<gan::Engine>& rngs, torch::Tensor* logits_out = nullptr);

// Optimizes each (class, seed) row independently; rows are batched for speed.
std::vector<RestartResult> optimize_latents(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                            const std::vector<std::int64_t>& classes,
                                            const std::vector<std::uint64_t>& seeds, const ReconstructConfig& cfg);

// Explicit seeds for each restart; their count sets R.
AttackResult reconstruct_with_seeds(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                    std::int64_t target_class, const std::vector<std::uint64_t>& restart_seeds,
                                    const ReconstructConfig& cfg);
AttackResult reconstruct(gan::ConditionalGenerator& generator, const models::Classifier& target,
                         std::int64_t target_class, std::uint64_t seed, const ReconstructConfig& cfg);

struct BatchAttackOptions {
  std::uint64_t base_seed = 0;
  std::int64_t jobs = 1;
  std::optional<std::filesystem::path> output_dir;  // attacks/<run_id>
  bool resume = true;  // reuse per-attack files found in output_dir
};

std::uint64_t attack_seed(std::uint64_t base_seed, std::int64_t target_class, std::int64_t image_index);

// images_per_class attacks per listed class, in class-major order.
std::vector<AttackResult> batch_attack(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                       const std::vector<std::int64_t>& classes, std::int64_t images_per_class,
                                       const ReconstructConfig& cfg, const BatchAttackOptions& options);

void save_attack(const AttackResult& result, const std::filesystem::path& path);
AttackResult load_attack(const std::filesystem::path& path);
std::filesystem::path attack_path(const std::filesystem::path& dir, std::int64_t target_class, std::uint64_t seed);
void write_attack_index(const std::vector<AttackResult>& results, const std::filesystem::path& dir);

// Number of m fresh augmented views of each image classified as its class.
torch::Tensor view_consistency(const models::Classifier& target, const torch::Tensor& images,
                               const torch::Tensor& classes, const gan::AugmentationPolicy& policy,
                               std::int64_t views, gan::Engine& rng);

// A stage-2 optimization exposed step by step for the trend recorder.
inversion::StageTwoStep make_stage_two_step(gan::ConditionalGenerator generator, const models::Classifier& target,
                                            const std::vector<std::int64_t>& classes,
                                            const std::vector<std::uint64_t>& seeds, const ReconstructConfig& cfg);

}  // namespace plgmi::attack
