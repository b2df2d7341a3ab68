#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "plgmi/data/image_batch.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::selection {

// Which target output ranks public images for a class.
enum class ScoreKind { kProbability, kLogit };

std::string_view to_string(ScoreKind kind);
ScoreKind parse_score_kind(std::string_view text);

struct SelectedImage {
  std::int64_t index = 0;  // position in the public pool
  double score = 0.0;
};

// Pseudo-labeled public data: per_class[k] lists the n public images with the
// highest class-k score, in non-increasing score order (ties by pool index).
// An image may appear under several pseudo-labels.
struct PseudoLabeledDataset {
  std::int64_t n = 0;
  ScoreKind score_kind = ScoreKind::kProbability;
  std::vector<std::vector<SelectedImage>> per_class;

  std::int64_t num_classes() const { return static_cast<std::int64_t>(per_class.size()); }
  std::int64_t total() const { return n * num_classes(); }
};

// Selection over a precomputed N x K score matrix.
PseudoLabeledDataset select_top_n(const torch::Tensor& scores, std::int64_t n, ScoreKind kind);

// N x K scores of the public pool under the target model.
torch::Tensor score_public_pool(const data::ImageBatch& public_pool, const models::Classifier& target, ScoreKind kind);

PseudoLabeledDataset assign_pseudo_labels(const data::ImageBatch& public_pool, const models::Classifier& target,
                                          std::int64_t n, std::int64_t num_classes,
                                          ScoreKind kind = ScoreKind::kProbability);

struct SelectionSummary {
  std::vector<double> mean_score;
  std::vector<double> min_score;
  std::int64_t unique_images = 0;
  // Sum over images of max(0, multiplicity - 1).
  std::int64_t duplicate_count = 0;
};

SelectionSummary selection_summary(const PseudoLabeledDataset& dr);

// Flattens the selection into a labeled batch (pseudo-labels as labels).
data::ImageBatch materialize(const PseudoLabeledDataset& dr, const data::ImageBatch& public_pool);

void save_selection(const PseudoLabeledDataset& dr, const std::filesystem::path& path);
PseudoLabeledDataset load_selection(const std::filesystem::path& path);

}  // namespace plgmi::selection
