#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "plgmi/data/image_batch.hpp"

namespace plgmi::data {

// Decoded source records of one dataset part, before preprocessing.
// images: N x C x H x W, uint8 (0..255) or float (0..1). labels: int64 N.
struct RawDataset {
  torch::Tensor images;
  torch::Tensor labels;
  std::int64_t num_labels = 0;
};

// Private/public partition of a labeled source. Either label sets or explicit
// record-index files select the records.
struct SplitSpec {
  std::vector<std::int64_t> private_labels;
  std::vector<std::int64_t> public_labels;
  std::optional<std::filesystem::path> private_index_file;
  std::optional<std::filesystem::path> public_index_file;
  std::uint64_t seed = 0;
  // Optional deterministic subsampling caps (applied after the seeded shuffle).
  std::optional<std::int64_t> max_private;
  std::optional<std::int64_t> max_public;
  std::string part = "train";
};

struct DatasetSplit {
  ImageBatch private_set;      // labels are private class indices 0..K-1
  torch::Tensor private_ids;   // int64 source record ids
  ImageBatch public_set;       // carries no labels
  torch::Tensor public_ids;
  std::int64_t num_classes = 0;
  ImageShape image_shape;
  // Private class index k corresponds to source label class_labels[k].
  std::vector<std::int64_t> class_labels;
  std::string dataset_hash;
};

// Known names: "mnist" (IDX files), "cifar10" (binary batches) and the
// synthetic "solid-<labels>x<per_label>" family of constant-intensity images.
bool is_known_dataset(std::string_view name);
RawDataset load_raw(std::string_view name, const std::filesystem::path& data_root,
                    std::string_view part = "train");

// Center-crops to a square, converts channel count, bilinearly resizes to the
// target shape and scales to [0, 1].
ImageBatch preprocess(const torch::Tensor& raw, const ImageShape& target);

DatasetSplit make_split(const RawDataset& raw, const SplitSpec& spec, const ImageShape& shape,
                        std::string_view dataset_name = "");
DatasetSplit load_split(std::string_view name, const std::filesystem::path& data_root,
                        const SplitSpec& spec, const ImageShape& shape);

// All records of a part with their source labels, preprocessed. Used to train
// the evaluation model on the original label space.
ImageBatch load_labeled(std::string_view name, const std::filesystem::path& data_root,
                        std::string_view part, const ImageShape& shape,
                        std::optional<std::int64_t> max_records = std::nullopt,
                        std::uint64_t seed = 0);

// Constant-intensity toy images: label l has intensity (l + 0.5) / labels,
// jittered per record by at most jitter / labels.
RawDataset make_solid_dataset(std::int64_t labels, std::int64_t per_label, const ImageShape& shape,
                              double jitter = 0.3, std::uint64_t seed = 0);

// Constant images with intensities drawn uniformly from [0, 1]; labels are the
// intensity bin among `bins` equal-width bins.
RawDataset make_uniform_solid_dataset(std::int64_t count, std::int64_t bins, const ImageShape& shape,
                                      std::uint64_t seed = 0);

}  // namespace plgmi::data
