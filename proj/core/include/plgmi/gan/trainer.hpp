#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "plgmi/data/image_batch.hpp"
#include "plgmi/gan/augmentation.hpp"
#include "plgmi/gan/networks.hpp"
#include "plgmi/inversion/losses.hpp"
#include "plgmi/models/classifier.hpp"
#include "plgmi/selection/top_n.hpp"

namespace plgmi::gan {

struct GanConfig {
  std::int64_t latent_dim = 128;
  std::int64_t g_channels = 16;
  std::int64_t d_channels = 16;
  std::int64_t batch_size = 64;
  double g_lr = 2e-4;
  double d_lr = 2e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  std::int64_t total_iters = 1000;
  std::int64_t d_steps = 1;
  double alpha = 0.2;
  inversion::InversionLoss inv_loss = inversion::InversionLoss::kMaxMargin;
  AugmentationPolicy aug;
  std::uint64_t seed = 0;
  int sn_power_iterations = 1;     // per discriminator forward in training mode
  // Power steps after every discriminator update: at most this many, fewer
  // once the sigma estimate moves by less than the tolerance.
  int sn_refresh_iterations = 200;
  double sn_refresh_tolerance = 1e-7;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::optional<std::filesystem::path> checkpoint_dir;
  std::int64_t log_every = 0;
};

struct GanLossRecord {
  std::int64_t iter = 0;
  double d_loss = 0.0;
  double g_adv = 0.0;
  double g_inv = 0.0;
};

struct GanModels {
  ConditionalGenerator generator{nullptr};
  ConditionalDiscriminator discriminator{nullptr};
};

GanModels make_gan(const GanConfig& config, std::int64_t num_classes, const data::ImageShape& shape);

struct GanTrainState {
  GanModels models;
  std::unique_ptr<torch::optim::Adam> g_opt;
  std::unique_ptr<torch::optim::Adam> d_opt;
  std::int64_t iteration = 0;
  double alpha = 0.2;
  std::vector<GanLossRecord> history;
};

struct GanCallbacks {
  // After every discriminator update (and spectral-norm refresh).
  std::function<void(std::int64_t iter, ConditionalDiscriminator&)> after_d_step;
  std::function<void(const GanLossRecord&)> on_iteration;
};

// dr: pseudo-labeled images (labels 0..K-1, every class non-empty).
GanTrainState train_cgan(const data::ImageBatch& dr, std::int64_t num_classes, const models::Classifier& target,
                         const GanConfig& config, const GanCallbacks& callbacks = {},
                         std::optional<GanTrainState> resume = std::nullopt);
GanTrainState train_cgan(const selection::PseudoLabeledDataset& dr, const data::ImageBatch& public_pool,
                         const models::Classifier& target, const GanConfig& config,
                         const GanCallbacks& callbacks = {});

// Generator in inference mode; output images in [0, 1].
data::ImageBatch sample(ConditionalGenerator& generator, const torch::Tensor& z, const torch::Tensor& classes);

// Columns: iter, d_loss, g_adv, g_inv.
void write_loss_history(const std::vector<GanLossRecord>& history, const std::filesystem::path& path);

// Single-file archive holding both networks and both optimizer states, with a
// `<path>.json` sidecar describing the architecture.
void save_gan_checkpoint(const GanTrainState& state, const GanConfig& config, const data::ImageShape& shape,
                         const std::filesystem::path& path);

struct LoadedGan {
  GanTrainState state;
  GanConfig config;
  std::int64_t num_classes = 0;
  data::ImageShape shape;
};
LoadedGan load_gan_checkpoint(const std::filesystem::path& path);

}  // namespace plgmi::gan
