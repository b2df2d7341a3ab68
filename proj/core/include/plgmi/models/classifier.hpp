#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plgmi/data/image_batch.hpp"

namespace plgmi::models {

// A classification network split at its penultimate layer.
class ClassifierNetImpl : public torch::nn::Module {
 public:
  virtual torch::Tensor features(const torch::Tensor& images) = 0;
  virtual torch::Tensor head(const torch::Tensor& features) = 0;
  torch::Tensor forward(const torch::Tensor& images) { return head(features(images)); }
};
using ClassifierNet = std::shared_ptr<ClassifierNetImpl>;

// Architecture ids:
//   resnet-s   small residual network, one basic block per stage (3 stages)
//   resnet18   four stages of two basic blocks
//   vgg-s      plain conv/max-pool stacks with a fully-connected penultimate layer
//   vgg16      VGG-16 layout scaled by width
//   linear     single affine layer on flattened pixels
//   intensity  fixed, parameter-free scorer of mean intensity against K levels
struct ArchitectureSpec {
  std::string id = "resnet-s";
  std::int64_t num_classes = 0;
  data::ImageShape input;
  std::int64_t width = 16;
};

std::vector<std::string> known_architectures();
ClassifierNet make_network(const ArchitectureSpec& spec);

// A trained network in inference mode. Parameters are frozen (requires_grad
// is false) but gradients still flow to the input through logits().
class Classifier {
 public:
  Classifier(ArchitectureSpec spec, ClassifierNet net);

  const std::string& architecture() const { return spec_.id; }
  const ArchitectureSpec& spec() const { return spec_; }
  std::int64_t num_classes() const { return spec_.num_classes; }
  std::int64_t feature_dim() const { return feature_dim_; }
  const data::ImageShape& input_shape() const { return spec_.input; }

  // Batched, gradient-free inference; results are N x K / N x feature_dim.
  torch::Tensor predict_logits(const data::ImageBatch& batch) const;
  torch::Tensor predict_probs(const data::ImageBatch& batch) const;
  torch::Tensor penultimate_features(const data::ImageBatch& batch) const;

  // Differentiable logits for an N x C x H x W tensor in [0, 1].
  torch::Tensor logits(const torch::Tensor& images) const;
  torch::Tensor features(const torch::Tensor& images) const;

  const ClassifierNet& network() const { return net_; }
  // SHA-256 over all parameters and buffers.
  std::string parameter_hash() const;

 private:
  void check_input(const torch::Tensor& images) const;
  torch::Tensor run_batched(const data::ImageBatch& batch, bool features_only) const;

  ArchitectureSpec spec_;
  ClassifierNet net_;
  std::int64_t feature_dim_ = 0;
};

struct TrainConfig {
  std::int64_t epochs = 2;
  std::int64_t batch_size = 128;
  double lr = 1e-3;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
};

struct TrainReport {
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
  double final_loss = 0.0;
  std::int64_t epochs = 0;
};

struct TrainedClassifier {
  Classifier model;
  TrainReport report;
};

// Labels must be zero-based class indices below spec.num_classes (>= 2).
TrainedClassifier train_classifier(const data::ImageBatch& train, const std::optional<data::ImageBatch>& validation,
                                   const ArchitectureSpec& spec, const TrainConfig& config);

double accuracy(const Classifier& model, const data::ImageBatch& labeled);

struct CheckpointMeta {
  std::string role;
  ArchitectureSpec spec;
  std::int64_t feature_dim = 0;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  TrainReport report;
};

// Writes <path> (torch archive) and <path>.json (sidecar manifest).
void save_classifier(const Classifier& model, const CheckpointMeta& meta, const std::filesystem::path& path);
std::pair<Classifier, CheckpointMeta> load_classifier(const std::filesystem::path& path);

}  // namespace plgmi::models
