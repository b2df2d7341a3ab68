#include "plgmi/gan/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>

#include "plgmi/error.hpp"
#include "plgmi/gan/losses.hpp"
#include "plgmi/util/seed.hpp"
#include "plgmi/util/torch_rng.hpp"

namespace plgmi::gan {
namespace {

constexpr int kGanCheckpointFormat = 1;

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr, const GanConfig& c) {
  return std::make_unique<torch::optim::Adam>(std::move(params),
                                              torch::optim::AdamOptions(lr).betas({c.beta1, c.beta2}));
}

// Uniform class, then a uniform image within that class.
class ClassSampler {
 public:
  ClassSampler(const torch::Tensor& labels, std::int64_t num_classes) : by_class_(num_classes) {
    auto acc = labels.accessor<std::int64_t, 1>();
    for (std::int64_t i = 0; i < acc.size(0); ++i) by_class_[acc[i]].push_back(i);
    for (std::int64_t k = 0; k < num_classes; ++k) {
      require(!by_class_[k].empty(), ErrorKind::kData, "pseudo-labeled data has no image for class " + std::to_string(k));
    }
  }

  std::pair<torch::Tensor, torch::Tensor> draw(std::int64_t count, Engine& rng) const {
    std::uniform_int_distribution<std::int64_t> cls(0, static_cast<std::int64_t>(by_class_.size()) - 1);
    std::vector<std::int64_t> idx, lab;
    for (std::int64_t i = 0; i < count; ++i) {
      const auto k = cls(rng);
      const auto& pool = by_class_[k];
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      idx.push_back(pool[pick(rng)]);
      lab.push_back(k);
    }
    return {torch::tensor(idx), torch::tensor(lab)};
  }

  torch::Tensor labels(std::int64_t count, Engine& rng) const {
    std::uniform_int_distribution<std::int64_t> cls(0, static_cast<std::int64_t>(by_class_.size()) - 1);
    std::vector<std::int64_t> lab;
    for (std::int64_t i = 0; i < count; ++i) lab.push_back(cls(rng));
    return torch::tensor(lab);
  }

 private:
  std::vector<std::vector<std::int64_t>> by_class_;
};

nlohmann::json describe(const GanConfig& c, std::int64_t num_classes, const data::ImageShape& shape) {
  return {{"format_version", kGanCheckpointFormat},
          {"latent_dim", c.latent_dim},
          {"g_channels", c.g_channels},
          {"d_channels", c.d_channels},
          {"num_classes", num_classes},
          {"image_shape", {shape.channels, shape.height, shape.width}},
          {"sn_power_iterations", c.sn_power_iterations},
          {"alpha", c.alpha},
          {"inv_loss", std::string(inversion::to_string(c.inv_loss))},
          {"g_lr", c.g_lr},
          {"d_lr", c.d_lr},
          {"betas", {c.beta1, c.beta2}},
          {"seed", c.seed}};
}

}  // namespace

GanModels make_gan(const GanConfig& config, std::int64_t num_classes, const data::ImageShape& shape) {
  GanModels m;
  m.generator = ConditionalGenerator(GeneratorOptions{config.latent_dim, num_classes, shape, config.g_channels});
  m.discriminator =
      ConditionalDiscriminator(DiscriminatorOptions{num_classes, shape, config.d_channels, config.sn_power_iterations});
  return m;
}

GanTrainState train_cgan(const data::ImageBatch& dr, std::int64_t num_classes, const models::Classifier& target,
                         const GanConfig& config, const GanCallbacks& callbacks, std::optional<GanTrainState> resume) {
  require(config.alpha >= 0.0, ErrorKind::kInvalidArgument, "alpha must be >= 0");
  require(config.batch_size >= 1 && config.d_steps >= 1 && config.total_iters >= 0, ErrorKind::kInvalidArgument,
          "batch_size and d_steps must be >= 1, total_iters >= 0");
  require(dr.labels.has_value() && !dr.empty(), ErrorKind::kData, "GAN training needs a non-empty labeled dataset");
  require(num_classes == target.num_classes(), ErrorKind::kInvalidArgument,
          "pseudo-label classes do not match the target model");
  data::validate(dr, num_classes);
  const auto shape = dr.shape();
  require(shape == target.input_shape(), ErrorKind::kInvalidArgument,
          "GAN image shape " + shape.str() + " differs from the target input " + target.input_shape().str());

  GanTrainState state;
  if (resume) {
    state = std::move(*resume);
  } else {
    torch::manual_seed(util::torch_seed(config.seed));
    state.models = make_gan(config, num_classes, shape);
    state.g_opt = make_adam(state.models.generator->parameters(), config.g_lr, config);
    state.d_opt = make_adam(state.models.discriminator->parameters(), config.d_lr, config);
  }
  state.alpha = config.alpha;
  auto& G = state.models.generator;
  auto& D = state.models.discriminator;
  G->train();
  D->train();

  const ClassSampler sampler(*dr.labels, num_classes);
  std::optional<std::filesystem::path> last_checkpoint;

  auto check = [&](double value, const char* what) {
    if (std::isfinite(value)) return;
    std::string msg = std::string("GAN training diverged at iteration ") + std::to_string(state.iteration) + ": " +
                      what + " is not finite";
    msg += last_checkpoint ? "; last good checkpoint " + last_checkpoint->string() : "; no checkpoint written yet";
    fail(ErrorKind::kNumerical, msg);
  };

  while (state.iteration < config.total_iters) {
    const auto iter = state.iteration;
    Engine rng(util::derive_seed(config.seed, {static_cast<std::uint64_t>(iter), 1}));
    auto zgen = util::make_generator(util::derive_seed(config.seed, {static_cast<std::uint64_t>(iter), 2}));
    GanLossRecord rec;
    rec.iter = iter + 1;

    for (std::int64_t s = 0; s < config.d_steps; ++s) {
      auto [idx, real_labels] = sampler.draw(config.batch_size, rng);
      auto real = dr.values.index_select(0, idx);
      auto fake_labels = sampler.labels(config.batch_size, rng);
      torch::Tensor fake;
      {
        torch::NoGradGuard guard;
        fake = G->forward(util::gaussian({config.batch_size, config.latent_dim}, zgen), fake_labels);
      }
      auto d_real = D->forward(real, real_labels);
      auto d_fake = D->forward(fake, fake_labels);
      auto loss = discriminator_hinge_loss(d_real, d_fake);
      rec.d_loss = loss.item<double>();
      check(rec.d_loss, "discriminator loss");
      state.d_opt->zero_grad();
      loss.backward();
      state.d_opt->step();
      D->refresh_spectral_norms(config.sn_refresh_iterations, config.sn_refresh_tolerance);
      if (callbacks.after_d_step) callbacks.after_d_step(iter, D);
    }

    auto labels = sampler.labels(config.batch_size, rng);
    auto images = G->forward(util::gaussian({config.batch_size, config.latent_dim}, zgen), labels);
    auto d_fake = D->forward(images, labels);
    auto g = generator_loss(d_fake, images, labels, target, config.aug, rng, config.alpha, config.inv_loss);
    rec.g_adv = g.adversarial.item<double>();
    rec.g_inv = g.inversion.item<double>();
    check(rec.g_adv, "generator adversarial loss");
    check(rec.g_inv, "generator inversion loss");
    state.g_opt->zero_grad();
    g.total.backward();
    state.g_opt->step();

    state.iteration = iter + 1;
    state.history.push_back(rec);
    if (callbacks.on_iteration) callbacks.on_iteration(rec);
    if (config.log_every > 0 && state.iteration % config.log_every == 0) {
      std::clog << "gan iter " << state.iteration << " d_loss " << rec.d_loss << " g_adv " << rec.g_adv << " g_inv "
                << rec.g_inv << "\n";
    }
    if (config.checkpoint_dir && config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0) {
      auto path = *config.checkpoint_dir / ("gan_" + std::to_string(state.iteration) + ".ckpt");
      save_gan_checkpoint(state, config, shape, path);
      last_checkpoint = path;
    }
  }
  G->eval();
  D->eval();
  return state;
}

GanTrainState train_cgan(const selection::PseudoLabeledDataset& dr, const data::ImageBatch& public_pool,
                         const models::Classifier& target, const GanConfig& config, const GanCallbacks& callbacks) {
  return train_cgan(selection::materialize(dr, public_pool), dr.num_classes(), target, config, callbacks);
}

data::ImageBatch sample(ConditionalGenerator& generator, const torch::Tensor& z, const torch::Tensor& classes) {
  const bool was_training = generator->is_training();
  generator->eval();
  torch::NoGradGuard guard;
  data::ImageBatch out{generator->forward(z, classes), classes.clone()};
  if (was_training) generator->train();
  return out;
}

void write_loss_history(const std::vector<GanLossRecord>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "iter,d_loss,g_adv,g_inv\n" << std::setprecision(9);
  for (const auto& r : history) out << r.iter << ',' << r.d_loss << ',' << r.g_adv << ',' << r.g_inv << '\n';
}

void save_gan_checkpoint(const GanTrainState& state, const GanConfig& config, const data::ImageShape& shape,
                         const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive, g, d, go, dopt;
  state.models.generator->save(g);
  state.models.discriminator->save(d);
  archive.write("generator", g);
  archive.write("discriminator", d);
  if (state.g_opt && state.d_opt) {
    state.g_opt->save(go);
    state.d_opt->save(dopt);
    archive.write("g_opt", go);
    archive.write("d_opt", dopt);
  }
  archive.write("iteration", torch::tensor(state.iteration));
  archive.save_to(path.string());

  auto j = describe(config, state.models.generator->options().num_classes, shape);
  j["iteration"] = state.iteration;
  j["has_optimizers"] = static_cast<bool>(state.g_opt && state.d_opt);
  std::ofstream out(path.string() + ".json");
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string() + ".json");
  out << std::setw(2) << j << "\n";
}

LoadedGan load_gan_checkpoint(const std::filesystem::path& path) {
  const auto sidecar = path.string() + ".json";
  require(std::filesystem::exists(path), ErrorKind::kDependency, "missing GAN checkpoint " + path.string());
  require(std::filesystem::exists(sidecar), ErrorKind::kDependency, "missing GAN checkpoint manifest " + sidecar);
  nlohmann::json j;
  try {
    std::ifstream in(sidecar);
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, "corrupt GAN manifest " + sidecar + ": " + e.what());
  }
  require(j.value("format_version", 0) == kGanCheckpointFormat, ErrorKind::kIo, "unsupported GAN checkpoint format");

  LoadedGan out;
  auto& c = out.config;
  c.latent_dim = j.at("latent_dim").get<std::int64_t>();
  c.g_channels = j.at("g_channels").get<std::int64_t>();
  c.d_channels = j.at("d_channels").get<std::int64_t>();
  c.sn_power_iterations = j.at("sn_power_iterations").get<int>();
  c.alpha = j.value("alpha", 0.2);
  c.inv_loss = inversion::parse_inversion_loss(j.value("inv_loss", std::string("max_margin")));
  c.g_lr = j.value("g_lr", 2e-4);
  c.d_lr = j.value("d_lr", 2e-4);
  auto betas = j.value("betas", std::vector<double>{0.0, 0.9});
  if (betas.size() == 2) c.beta1 = betas[0], c.beta2 = betas[1];
  c.seed = j.value("seed", std::uint64_t{0});
  out.num_classes = j.at("num_classes").get<std::int64_t>();
  auto s = j.at("image_shape").get<std::vector<std::int64_t>>();
  require(s.size() == 3, ErrorKind::kIo, "bad image_shape in " + sidecar);
  out.shape = {s[0], s[1], s[2]};

  out.state.models = make_gan(c, out.num_classes, out.shape);
  torch::serialize::InputArchive archive, g, d;
  archive.load_from(path.string());
  archive.read("generator", g);
  archive.read("discriminator", d);
  out.state.models.generator->load(g);
  out.state.models.discriminator->load(d);
  out.state.g_opt = make_adam(out.state.models.generator->parameters(), c.g_lr, c);
  out.state.d_opt = make_adam(out.state.models.discriminator->parameters(), c.d_lr, c);
  if (j.value("has_optimizers", false)) {
    torch::serialize::InputArchive go, dopt;
    archive.read("g_opt", go);
    archive.read("d_opt", dopt);
    out.state.g_opt->load(go);
    out.state.d_opt->load(dopt);
  }
  torch::Tensor iter;
  archive.read("iteration", iter);
  out.state.iteration = iter.item<std::int64_t>();
  out.state.alpha = c.alpha;
  out.state.models.generator->eval();
  out.state.models.discriminator->eval();
  return out;
}

}  // namespace plgmi::gan
