#include "plgmi/data/image_batch.hpp"

#include <sstream>

#include "plgmi/error.hpp"

namespace plgmi::data {

std::string ImageShape::str() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  return os.str();
}

ImageShape ImageBatch::shape() const {
  if (!values.defined() || values.dim() != 4) return {0, 0, 0};
  return {values.size(1), values.size(2), values.size(3)};
}

ImageBatch ImageBatch::slice(std::int64_t begin, std::int64_t end) const {
  ImageBatch out{values.slice(0, begin, end), std::nullopt};
  if (labels) out.labels = labels->slice(0, begin, end);
  return out;
}

ImageBatch ImageBatch::select(const torch::Tensor& indices) const {
  ImageBatch out{values.index_select(0, indices), std::nullopt};
  if (labels) out.labels = labels->index_select(0, indices);
  return out;
}

void validate(const ImageBatch& batch, std::optional<std::int64_t> num_classes) {
  const auto& v = batch.values;
  require(v.defined() && v.dim() == 4, ErrorKind::kData, "image batch must be a 4-d N x C x H x W tensor");
  require(v.scalar_type() == torch::kFloat32, ErrorKind::kData, "image batch must be float32");
  if (v.numel() > 0) {
    require(torch::isfinite(v).all().item<bool>(), ErrorKind::kData, "image batch has non-finite pixels");
    require(v.min().item<float>() >= 0.0f && v.max().item<float>() <= 1.0f, ErrorKind::kData,
            "image batch pixels must lie in [0, 1]");
  }
  if (batch.labels) {
    const auto& l = *batch.labels;
    require(l.dim() == 1 && l.size(0) == v.size(0), ErrorKind::kData, "label vector length must equal batch size");
    if (num_classes && l.numel() > 0) {
      require(l.min().item<std::int64_t>() >= 0 && l.max().item<std::int64_t>() < *num_classes, ErrorKind::kData,
              "label out of range [0, " + std::to_string(*num_classes) + ")");
    }
  }
}

ImageBatch concat(const ImageBatch& a, const ImageBatch& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  ImageBatch out{torch::cat({a.values, b.values}), std::nullopt};
  if (a.labels && b.labels) out.labels = torch::cat({*a.labels, *b.labels});
  return out;
}

}  // namespace plgmi::data
