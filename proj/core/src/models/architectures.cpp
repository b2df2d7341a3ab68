#include <cmath>

#include "plgmi/error.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::models {
namespace {

namespace nn = torch::nn;

nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

class BasicBlockImpl : public nn::Module {
 public:
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride)
      : conv1_(register_module("conv1", conv3x3(in, out, stride))),
        bn1_(register_module("bn1", nn::BatchNorm2d(out))),
        conv2_(register_module("conv2", conv3x3(out, out))),
        bn2_(register_module("bn2", nn::BatchNorm2d(out))) {
    if (stride != 1 || in != out) {
      shortcut_conv_ = register_module("shortcut_conv",
                                       nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
      shortcut_bn_ = register_module("shortcut_bn", nn::BatchNorm2d(out));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = torch::relu(bn1_(conv1_(x)));
    y = bn2_(conv2_(y));
    auto skip = shortcut_conv_ ? shortcut_bn_(shortcut_conv_(x)) : x;
    return torch::relu(y + skip);
  }

 private:
  nn::Conv2d conv1_;
  nn::BatchNorm2d bn1_;
  nn::Conv2d conv2_;
  nn::BatchNorm2d bn2_;
  nn::Conv2d shortcut_conv_{nullptr};
  nn::BatchNorm2d shortcut_bn_{nullptr};
};
TORCH_MODULE(BasicBlock);

class ResNetImpl : public ClassifierNetImpl {
 public:
  ResNetImpl(const ArchitectureSpec& spec, std::vector<int> blocks_per_stage, bool strided_stem) {
    const auto w = spec.width;
    stem_ = register_module("stem", nn::Conv2d(nn::Conv2dOptions(spec.input.channels, w, 3)
                                                   .stride(strided_stem ? 2 : 1)
                                                   .padding(1)
                                                   .bias(false)));
    stem_bn_ = register_module("stem_bn", nn::BatchNorm2d(w));
    std::int64_t in = w;
    for (std::size_t s = 0; s < blocks_per_stage.size(); ++s) {
      const std::int64_t out = w << s;
      for (int b = 0; b < blocks_per_stage[s]; ++b) {
        const std::int64_t stride = (b == 0 && s > 0) ? 2 : 1;
        stages_->push_back(BasicBlock(in, out, stride));
        in = out;
      }
    }
    register_module("stages", stages_);
    fc_ = register_module("fc", nn::Linear(in, spec.num_classes));
  }

  torch::Tensor features(const torch::Tensor& images) override {
    auto x = torch::relu(stem_bn_(stem_(images * 2.0 - 1.0)));
    x = stages_->forward(x);
    return x.mean({2, 3});
  }
  torch::Tensor head(const torch::Tensor& f) override { return fc_(f); }

 private:
  nn::Conv2d stem_{nullptr};
  nn::BatchNorm2d stem_bn_{nullptr};
  nn::Sequential stages_;
  nn::Linear fc_{nullptr};
};

class VggImpl : public ClassifierNetImpl {
 public:
  // cfg entries > 0 are conv widths in units of spec.width; 0 is a 2x2 max-pool.
  VggImpl(const ArchitectureSpec& spec, const std::vector<int>& cfg, std::int64_t hidden) {
    std::int64_t in = spec.input.channels;
    std::int64_t h = spec.input.height, w = spec.input.width;
    for (int c : cfg) {
      if (c == 0) {
        body_->push_back(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
        h /= 2;
        w /= 2;
      } else {
        const std::int64_t out = spec.width * c;
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
        body_->push_back(nn::BatchNorm2d(out));
        body_->push_back(nn::ReLU());
        in = out;
      }
    }
    require(h > 0 && w > 0, ErrorKind::kInvalidArgument, "input too small for vgg architecture");
    register_module("body", body_);
    fc1_ = register_module("fc1", nn::Linear(in * h * w, hidden));
    dropout_ = register_module("dropout", nn::Dropout(0.3));
    fc2_ = register_module("fc2", nn::Linear(hidden, spec.num_classes));
  }

  torch::Tensor features(const torch::Tensor& images) override {
    auto x = body_->forward(images * 2.0 - 1.0).flatten(1);
    return torch::relu(fc1_(x));
  }
  torch::Tensor head(const torch::Tensor& f) override { return fc2_(dropout_(f)); }

 private:
  nn::Sequential body_;
  nn::Linear fc1_{nullptr};
  nn::Dropout dropout_{nullptr};
  nn::Linear fc2_{nullptr};
};

class LinearNetImpl : public ClassifierNetImpl {
 public:
  explicit LinearNetImpl(const ArchitectureSpec& spec)
      : fc_(register_module("fc", nn::Linear(spec.input.numel(), spec.num_classes))) {}

  torch::Tensor features(const torch::Tensor& images) override { return images.flatten(1); }
  torch::Tensor head(const torch::Tensor& f) override { return fc_(f); }

 private:
  nn::Linear fc_;
};

// logits_k = -scale * (mean(x) - level_k)^2 with level_k = (k + 0.5) / K:
// a perfect classifier for constant-intensity images of the solid datasets.
class IntensityNetImpl : public ClassifierNetImpl {
 public:
  explicit IntensityNetImpl(const ArchitectureSpec& spec) {
    auto levels = (torch::arange(spec.num_classes, torch::kFloat32) + 0.5) / static_cast<double>(spec.num_classes);
    levels_ = register_buffer("levels", levels);
  }

  torch::Tensor features(const torch::Tensor& images) override { return images.flatten(1).mean(1, true); }
  torch::Tensor head(const torch::Tensor& f) override { return -kScale * (f - levels_.unsqueeze(0)).square(); }

 private:
  static constexpr double kScale = 200.0;
  torch::Tensor levels_;
};

}  // namespace

std::vector<std::string> known_architectures() {
  return {"resnet-s", "resnet18", "vgg-s", "vgg16", "linear", "intensity"};
}

ClassifierNet make_network(const ArchitectureSpec& spec) {
  require(spec.num_classes >= 1, ErrorKind::kInvalidArgument, "architecture needs num_classes >= 1");
  require(spec.input.numel() > 0, ErrorKind::kInvalidArgument, "architecture needs a positive input shape");
  require(spec.width >= 1, ErrorKind::kInvalidArgument, "architecture width must be positive");
  if (spec.id == "resnet-s") return std::make_shared<ResNetImpl>(spec, std::vector<int>{1, 1, 1}, true);
  if (spec.id == "resnet18") return std::make_shared<ResNetImpl>(spec, std::vector<int>{2, 2, 2, 2}, false);
  if (spec.id == "vgg-s") return std::make_shared<VggImpl>(spec, std::vector<int>{1, 1, 0, 2, 2, 0, 4, 0}, 128);
  if (spec.id == "vgg16") {
    return std::make_shared<VggImpl>(
        spec, std::vector<int>{1, 1, 0, 2, 2, 0, 4, 4, 4, 0, 8, 8, 8, 0, 8, 8, 8, 0}, 512);
  }
  if (spec.id == "linear") return std::make_shared<LinearNetImpl>(spec);
  if (spec.id == "intensity") return std::make_shared<IntensityNetImpl>(spec);
  fail(ErrorKind::kInvalidArgument, "unknown architecture '" + spec.id + "'");
}

}  // namespace plgmi::models
