#include "plgmi/models/classifier.hpp"

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>

#include "plgmi/error.hpp"
#include "plgmi/util/hash.hpp"
#include "plgmi/util/torch_rng.hpp"

namespace plgmi::models {
namespace {

constexpr std::int64_t kInferenceChunk = 512;
constexpr int kCheckpointFormat = 1;

}  // namespace

Classifier::Classifier(ArchitectureSpec spec, ClassifierNet net) : spec_(std::move(spec)), net_(std::move(net)) {
  require(net_ != nullptr, ErrorKind::kInvalidArgument, "classifier network is null");
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  torch::NoGradGuard guard;
  auto probe = torch::zeros({1, spec_.input.channels, spec_.input.height, spec_.input.width});
  feature_dim_ = net_->features(probe).size(1);
}

void Classifier::check_input(const torch::Tensor& images) const {
  require(images.dim() == 4 && images.size(1) == spec_.input.channels && images.size(2) == spec_.input.height &&
              images.size(3) == spec_.input.width,
          ErrorKind::kInvalidArgument,
          "input shape mismatch: model expects N x " + spec_.input.str());
}

torch::Tensor Classifier::run_batched(const data::ImageBatch& batch, bool features_only) const {
  check_input(batch.values);
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < batch.size(); i += kInferenceChunk) {
    auto x = batch.values.slice(0, i, std::min(i + kInferenceChunk, batch.size()));
    parts.push_back(features_only ? net_->features(x) : net_->forward(x));
  }
  if (parts.empty()) {
    return torch::empty({0, features_only ? feature_dim_ : spec_.num_classes});
  }
  return torch::cat(parts);
}

torch::Tensor Classifier::predict_logits(const data::ImageBatch& batch) const { return run_batched(batch, false); }

torch::Tensor Classifier::predict_probs(const data::ImageBatch& batch) const {
  return torch::softmax(predict_logits(batch), 1);
}

torch::Tensor Classifier::penultimate_features(const data::ImageBatch& batch) const {
  return run_batched(batch, true);
}

torch::Tensor Classifier::logits(const torch::Tensor& images) const {
  check_input(images);
  return net_->forward(images);
}

torch::Tensor Classifier::features(const torch::Tensor& images) const {
  check_input(images);
  return net_->features(images);
}

std::string Classifier::parameter_hash() const {
  util::Sha256 h;
  for (const auto& item : net_->named_parameters()) h.update(item.key()).update(item.value());
  for (const auto& item : net_->named_buffers()) h.update(item.key()).update(item.value());
  return h.hex();
}

TrainedClassifier train_classifier(const data::ImageBatch& train, const std::optional<data::ImageBatch>& validation,
                                   const ArchitectureSpec& spec, const TrainConfig& config) {
  require(spec.num_classes >= 2, ErrorKind::kInvalidArgument,
          "training needs at least 2 classes, got " + std::to_string(spec.num_classes));
  require(train.labels.has_value(), ErrorKind::kData, "training data must be labeled");
  require(!train.empty(), ErrorKind::kData, "training data is empty");
  require(config.epochs >= 0 && config.batch_size >= 1, ErrorKind::kInvalidArgument, "bad training config");
  data::validate(train, spec.num_classes);
  if (validation) data::validate(*validation, spec.num_classes);

  torch::manual_seed(util::torch_seed(config.seed));
  auto net = make_network(spec);
  auto params = net->parameters();
  TrainReport report;

  if (!params.empty() && config.epochs > 0) {
    torch::optim::Adam opt(params, torch::optim::AdamOptions(config.lr).weight_decay(config.weight_decay));
    auto gen = util::make_generator(util::derive_seed(config.seed, {1}));
    const auto n = train.size();
    const auto steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const auto total_steps = steps_per_epoch * config.epochs;
    std::int64_t step = 0;
    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
      net->train();
      auto order = torch::randperm(n, gen, torch::kInt64);
      double loss_sum = 0.0;
      std::int64_t seen = 0;
      for (std::int64_t b = 0; b < n; b += config.batch_size, ++step) {
        // Cosine decay to zero over the run.
        const double lr = 0.5 * config.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / total_steps));
        for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        auto idx = order.slice(0, b, std::min(b + config.batch_size, n));
        auto x = train.values.index_select(0, idx);
        auto y = train.labels->index_select(0, idx);
        auto loss = torch::nn::functional::cross_entropy(net->forward(x), y);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) {
          fail(ErrorKind::kNumerical, "classifier training diverged at epoch " + std::to_string(epoch) + ", step " +
                                          std::to_string(step) + " (loss=" + std::to_string(value) + ")");
        }
        opt.zero_grad();
        loss.backward();
        opt.step();
        loss_sum += value * static_cast<double>(idx.size(0));
        seen += idx.size(0);
      }
      report.final_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(seen, 1));
      report.epochs = epoch + 1;
    }
  }

  Classifier model(spec, net);
  report.train_accuracy = accuracy(model, train);
  if (validation) report.validation_accuracy = accuracy(model, *validation);
  return {std::move(model), report};
}

double accuracy(const Classifier& model, const data::ImageBatch& labeled) {
  require(labeled.labels.has_value(), ErrorKind::kData, "accuracy needs labeled data");
  require(!labeled.empty(), ErrorKind::kData, "accuracy of an empty batch is undefined");
  auto pred = model.predict_logits(labeled).argmax(1);
  return pred.eq(*labeled.labels).to(torch::kFloat64).mean().item<double>();
}

void save_classifier(const Classifier& model, const CheckpointMeta& meta, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  model.network()->save(archive);
  archive.save_to(path.string());

  nlohmann::json j;
  j["format_version"] = kCheckpointFormat;
  j["role"] = meta.role;
  j["architecture"] = model.architecture();
  j["num_classes"] = model.num_classes();
  j["input_shape"] = {model.input_shape().channels, model.input_shape().height, model.input_shape().width};
  j["width"] = model.spec().width;
  j["feature_dim"] = model.feature_dim();
  j["seed"] = meta.seed;
  j["dataset_hash"] = meta.dataset_hash;
  j["parameter_hash"] = model.parameter_hash();
  j["train_accuracy"] = meta.report.train_accuracy;
  j["validation_accuracy"] =
      meta.report.validation_accuracy ? nlohmann::json(*meta.report.validation_accuracy) : nlohmann::json(nullptr);
  j["final_loss"] = meta.report.final_loss;
  j["epochs"] = meta.report.epochs;
  std::ofstream out(path.string() + ".json");
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string() + ".json");
  out << std::setw(2) << j << "\n";
}

std::pair<Classifier, CheckpointMeta> load_classifier(const std::filesystem::path& path) {
  const auto sidecar = path.string() + ".json";
  require(std::filesystem::exists(path), ErrorKind::kDependency, "missing checkpoint " + path.string());
  require(std::filesystem::exists(sidecar), ErrorKind::kDependency, "missing checkpoint manifest " + sidecar);
  std::ifstream in(sidecar);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, "corrupt checkpoint manifest " + sidecar + ": " + e.what());
  }
  require(j.value("format_version", 0) == kCheckpointFormat, ErrorKind::kIo, "unsupported checkpoint format");

  CheckpointMeta meta;
  meta.role = j.value("role", "");
  meta.spec.id = j.at("architecture").get<std::string>();
  meta.spec.num_classes = j.at("num_classes").get<std::int64_t>();
  auto shape = j.at("input_shape").get<std::vector<std::int64_t>>();
  require(shape.size() == 3, ErrorKind::kIo, "bad input_shape in " + sidecar);
  meta.spec.input = {shape[0], shape[1], shape[2]};
  meta.spec.width = j.at("width").get<std::int64_t>();
  meta.feature_dim = j.at("feature_dim").get<std::int64_t>();
  meta.seed = j.value("seed", std::uint64_t{0});
  meta.dataset_hash = j.value("dataset_hash", "");
  meta.report.train_accuracy = j.value("train_accuracy", 0.0);
  if (j.contains("validation_accuracy") && !j["validation_accuracy"].is_null()) {
    meta.report.validation_accuracy = j["validation_accuracy"].get<double>();
  }
  meta.report.final_loss = j.value("final_loss", 0.0);
  meta.report.epochs = j.value("epochs", std::int64_t{0});

  auto net = make_network(meta.spec);
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  net->load(archive);
  Classifier model(meta.spec, net);
  require(model.feature_dim() == meta.feature_dim, ErrorKind::kIo, "feature_dim mismatch in " + sidecar);
  return {std::move(model), meta};
}

}  // namespace plgmi::models
