#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <string>

namespace plgmi::data {

struct ImageShape {
  std::int64_t channels = 1;
  std::int64_t height = 32;
  std::int64_t width = 32;

  std::int64_t numel() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
  std::string str() const;
};

// Images as an N x C x H x W float32 tensor with pixel values in [0, 1].
// Labels, when present, are an int64 vector of length N holding zero-based
// class indices.
struct ImageBatch {
  torch::Tensor values;
  std::optional<torch::Tensor> labels;

  std::int64_t size() const { return values.defined() ? values.size(0) : 0; }
  ImageShape shape() const;
  bool empty() const { return size() == 0; }

  ImageBatch slice(std::int64_t begin, std::int64_t end) const;
  ImageBatch select(const torch::Tensor& indices) const;
};

// Throws Error(kData) if values are not a finite 4-d float tensor in [0, 1],
// or if labels have the wrong length or fall outside [0, num_classes).
void validate(const ImageBatch& batch, std::optional<std::int64_t> num_classes = std::nullopt);

ImageBatch concat(const ImageBatch& a, const ImageBatch& b);

}  // namespace plgmi::data
