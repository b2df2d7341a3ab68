#include "plgmi/attack/reconstructor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>

#include "plgmi/error.hpp"
#include "plgmi/util/seed.hpp"
#include "plgmi/util/torch_rng.hpp"

namespace plgmi::attack {
namespace {

enum SeedStream : std::uint64_t { kInit = 0, kViews = 1, kFinal = 2 };

torch::Tensor initial_latents(const std::vector<std::uint64_t>& seeds, std::int64_t latent_dim) {
  std::vector<torch::Tensor> rows;
  rows.reserve(seeds.size());
  for (auto s : seeds) {
    auto gen = util::make_generator(util::derive_seed(s, {kInit}));
    rows.push_back(util::gaussian({latent_dim}, gen));
  }
  return torch::stack(rows);
}

std::vector<gan::Engine> engines(const std::vector<std::uint64_t>& seeds, SeedStream stream) {
  std::vector<gan::Engine> out;
  out.reserve(seeds.size());
  for (auto s : seeds) out.emplace_back(util::derive_seed(s, {stream}));
  return out;
}

void check_request(const gan::ConditionalGenerator& generator, const models::Classifier& target,
                   const std::vector<std::int64_t>& classes, const ReconstructConfig& cfg) {
  require(cfg.views >= 1, ErrorKind::kInvalidArgument, "views (m) must be >= 1");
  require(cfg.iterations >= 0, ErrorKind::kInvalidArgument, "iterations must be >= 0");
  require(cfg.chunk_rows >= 1, ErrorKind::kInvalidArgument, "chunk_rows must be >= 1");
  require(cfg.lr > 0.0, ErrorKind::kInvalidArgument, "learning rate must be > 0");
  const auto& opt = generator->options();
  require(opt.num_classes == target.num_classes(), ErrorKind::kInvalidArgument,
          "generator and target disagree on the class count");
  require(opt.output == target.input_shape(), ErrorKind::kInvalidArgument,
          "generator output " + opt.output.str() + " does not match target input " + target.input_shape().str());
  for (auto c : classes) {
    require(c >= 0 && c < opt.num_classes, ErrorKind::kInvalidArgument,
            "target class " + std::to_string(c) + " outside [0, " + std::to_string(opt.num_classes) + ")");
  }
}

std::vector<RestartResult> optimize_chunk(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                          const std::vector<std::int64_t>& classes,
                                          const std::vector<std::uint64_t>& seeds, const ReconstructConfig& cfg) {
  const auto n = static_cast<std::int64_t>(seeds.size());
  auto cls = torch::tensor(classes);
  auto z = initial_latents(seeds, generator->options().latent_dim).requires_grad_(true);
  torch::optim::Adam opt({z}, torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  auto rngs = engines(seeds, kViews);

  std::vector<RestartResult> out(seeds.size());
  std::vector<std::int64_t> alive(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    out[i].seed = seeds[i];
    out[i].curve.reserve(static_cast<std::size_t>(cfg.iterations));
    alive[i] = i;
  }

  for (std::int64_t it = 0; it < cfg.iterations && !alive.empty(); ++it) {
    auto obj = multi_view_objective(generator, target, z, cls, cfg, rngs);
    auto values = obj.detach().to(torch::kFloat64).contiguous();
    const auto* v = values.data_ptr<double>();
    std::vector<std::int64_t> still;
    still.reserve(alive.size());
    for (auto i : alive) {
      if (!std::isfinite(v[i])) {
        out[i].failure = "non-finite objective at iteration " + std::to_string(it);
        std::clog << "restart seed " << seeds[i] << " aborted: " << *out[i].failure << "\n";
        continue;
      }
      auto& r = out[i];
      r.curve.push_back(v[i]);
      r.running_min.push_back(r.running_min.empty() ? v[i] : std::min(r.running_min.back(), v[i]));
      still.push_back(i);
    }
    const bool dropped = still.size() != alive.size();
    alive = std::move(still);
    if (alive.empty()) break;

    auto total = obj.index_select(0, torch::tensor(alive)).sum();
    auto grad = torch::autograd::grad({total}, {z})[0];
    if (dropped) {
      auto keep = torch::zeros({n}, torch::kBool);
      keep.index_put_({torch::tensor(alive)}, true);
      grad = torch::where(keep.view({-1, 1}), grad, torch::zeros_like(grad));
    }
    z.mutable_grad() = grad;
    opt.step();
  }

  // Final objective on fresh views from a dedicated stream.
  auto final_rngs = engines(seeds, kFinal);
  torch::Tensor finals;
  {
    torch::NoGradGuard guard;
    finals = multi_view_objective(generator, target, z.detach(), cls, cfg, final_rngs).to(torch::kFloat64);
  }
  auto zd = z.detach();
  for (std::int64_t i = 0; i < n; ++i) {
    auto& r = out[i];
    r.z = zd[i].clone();
    if (r.failure) continue;
    const double f = finals[i].item<double>();
    if (!std::isfinite(f)) {
      r.failure = "non-finite final objective";
      std::clog << "restart seed " << seeds[i] << " aborted: " << *r.failure << "\n";
      continue;
    }
    r.final_objective = f;
  }
  return out;
}

AttackResult assemble(gan::ConditionalGenerator& generator, std::int64_t target_class, std::uint64_t seed,
                      std::vector<RestartResult> restarts) {
  AttackResult res;
  res.target_class = target_class;
  res.seed = seed;
  res.restarts = std::move(restarts);
  for (std::size_t r = 0; r < res.restarts.size(); ++r) {
    const auto& rr = res.restarts[r];
    if (rr.failure) continue;
    if (res.best < 0 || rr.final_objective < res.restarts[static_cast<std::size_t>(res.best)].final_objective) {
      res.best = static_cast<std::int64_t>(r);
    }
  }
  std::vector<torch::Tensor> zs;
  for (const auto& rr : res.restarts) zs.push_back(rr.z);
  auto z = torch::stack(zs);
  auto labels = torch::full({z.size(0)}, target_class, torch::kInt64);
  {
    torch::NoGradGuard guard;
    res.x_all = generator->forward(z, labels).contiguous();
  }
  for (std::size_t r = 0; r < res.restarts.size(); ++r) {
    if (res.restarts[r].failure) res.x_all[static_cast<std::int64_t>(r)].zero_();
  }
  if (res.best < 0) {
    res.error = "all " + std::to_string(res.restarts.size()) + " restarts failed for class " +
                std::to_string(target_class);
    return res;
  }
  res.z_star = res.restarts[static_cast<std::size_t>(res.best)].z;
  res.x_star = res.x_all[res.best].clone();
  return res;
}

std::int64_t as_signed(std::uint64_t v) { return std::bit_cast<std::int64_t>(v); }
std::uint64_t as_unsigned(std::int64_t v) { return std::bit_cast<std::uint64_t>(v); }

}  // namespace

std::uint64_t restart_seed(std::uint64_t attack_seed, std::int64_t restart) {
  return util::derive_seed(attack_seed, {static_cast<std::uint64_t>(restart)});
}

std::uint64_t attack_seed(std::uint64_t base_seed, std::int64_t target_class, std::int64_t image_index) {
  return util::derive_seed(base_seed, {static_cast<std::uint64_t>(target_class), static_cast<std::uint64_t>(image_index)});
}

torch::Tensor multi_view_objective(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                   const torch::Tensor& z, const torch::Tensor& classes, const ReconstructConfig& cfg,
                                   std::vector<gan::Engine>& rngs, torch::Tensor* logits_out) {
  const auto n = z.size(0);
  require(static_cast<std::int64_t>(rngs.size()) == n, ErrorKind::kInvalidArgument, "one engine per latent row");
  auto images = generator->forward(z, classes);
  std::vector<torch::Tensor> views;
  views.reserve(static_cast<std::size_t>(cfg.views));
  for (std::int64_t v = 0; v < cfg.views; ++v) views.push_back(gan::apply_augmentations(images, cfg.policy, rngs));
  auto logits = target.logits(torch::cat(views));
  if (logits_out) *logits_out = logits;
  auto losses = inversion::inversion_loss(cfg.loss, logits, classes.repeat({cfg.views}));
  return losses.view({cfg.views, n}).sum(0);
}

std::vector<RestartResult> optimize_latents(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                            const std::vector<std::int64_t>& classes,
                                            const std::vector<std::uint64_t>& seeds, const ReconstructConfig& cfg) {
  require(classes.size() == seeds.size(), ErrorKind::kInvalidArgument, "one class per latent seed is required");
  check_request(generator, target, classes, cfg);
  std::vector<RestartResult> out;
  out.reserve(seeds.size());
  const auto chunk = static_cast<std::size_t>(cfg.chunk_rows);
  for (std::size_t b = 0; b < seeds.size(); b += chunk) {
    const auto e = std::min(seeds.size(), b + chunk);
    auto part = optimize_chunk(generator, target, {classes.begin() + b, classes.begin() + e},
                               {seeds.begin() + b, seeds.begin() + e}, cfg);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

AttackResult reconstruct_with_seeds(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                    std::int64_t target_class, const std::vector<std::uint64_t>& restart_seeds,
                                    const ReconstructConfig& cfg) {
  require(!restart_seeds.empty(), ErrorKind::kInvalidArgument, "restarts must be >= 1");
  generator->eval();
  std::vector<std::int64_t> classes(restart_seeds.size(), target_class);
  auto res = assemble(generator, target_class, restart_seeds.front(),
                      optimize_latents(generator, target, classes, restart_seeds, cfg));
  if (!res.ok()) fail(ErrorKind::kNumerical, *res.error);
  return res;
}

AttackResult reconstruct(gan::ConditionalGenerator& generator, const models::Classifier& target,
                         std::int64_t target_class, std::uint64_t seed, const ReconstructConfig& cfg) {
  require(cfg.restarts >= 1, ErrorKind::kInvalidArgument, "restarts must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (std::int64_t r = 0; r < cfg.restarts; ++r) seeds.push_back(restart_seed(seed, r));
  auto res = reconstruct_with_seeds(generator, target, target_class, seeds, cfg);
  res.seed = seed;
  return res;
}

std::filesystem::path attack_path(const std::filesystem::path& dir, std::int64_t target_class, std::uint64_t seed) {
  return dir / ("class_" + std::to_string(target_class)) / ("seed_" + std::to_string(seed) + ".npzlike");
}

std::vector<AttackResult> batch_attack(gan::ConditionalGenerator& generator, const models::Classifier& target,
                                       const std::vector<std::int64_t>& classes, std::int64_t images_per_class,
                                       const ReconstructConfig& cfg, const BatchAttackOptions& options) {
  require(images_per_class >= 0, ErrorKind::kInvalidArgument, "images_per_class must be >= 0");
  require(cfg.restarts >= 1, ErrorKind::kInvalidArgument, "restarts must be >= 1");
  check_request(generator, target, classes, cfg);
  generator->eval();

  struct Pending {
    std::size_t slot;
    std::int64_t cls;
    std::uint64_t seed;
  };
  std::vector<AttackResult> results(classes.size() * static_cast<std::size_t>(images_per_class));
  std::vector<Pending> pending;
  std::size_t slot = 0;
  for (auto c : classes) {
    for (std::int64_t i = 0; i < images_per_class; ++i, ++slot) {
      const auto s = attack_seed(options.base_seed, c, i);
      if (options.output_dir && options.resume) {
        const auto p = attack_path(*options.output_dir, c, s);
        if (std::filesystem::exists(p)) {
          try {
            auto loaded = load_attack(p);
            if (static_cast<std::int64_t>(loaded.restarts.size()) == cfg.restarts) {
              results[slot] = std::move(loaded);
              continue;
            }
          } catch (const Error& e) {
            std::clog << "ignoring unreadable attack file " << p << ": " << e.what() << "\n";
          }
        }
      }
      pending.push_back({slot, c, s});
    }
  }
  if (pending.empty()) return results;

  // Flatten to one row per restart and split rows evenly across workers.
  std::vector<std::int64_t> row_cls;
  std::vector<std::uint64_t> row_seed;
  for (const auto& p : pending) {
    for (std::int64_t r = 0; r < cfg.restarts; ++r) {
      row_cls.push_back(p.cls);
      row_seed.push_back(restart_seed(p.seed, r));
    }
  }
  const auto jobs = static_cast<std::size_t>(std::max<std::int64_t>(1, options.jobs));
  const auto per_job = (pending.size() + jobs - 1) / jobs * static_cast<std::size_t>(cfg.restarts);
  std::vector<std::future<std::vector<RestartResult>>> futures;
  for (std::size_t b = 0; b < row_seed.size(); b += per_job) {
    const auto e = std::min(row_seed.size(), b + per_job);
    std::vector<std::int64_t> c(row_cls.begin() + b, row_cls.begin() + e);
    std::vector<std::uint64_t> s(row_seed.begin() + b, row_seed.begin() + e);
    futures.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&generator, &target, &cfg, c = std::move(c), s = std::move(s)]() {
                                   return optimize_latents(generator, target, c, s, cfg);
                                 }));
  }
  std::vector<RestartResult> rows;
  rows.reserve(row_seed.size());
  for (auto& f : futures) {
    auto part = f.get();
    std::move(part.begin(), part.end(), std::back_inserter(rows));
  }

  for (std::size_t k = 0; k < pending.size(); ++k) {
    const auto& p = pending[k];
    auto first = rows.begin() + static_cast<std::ptrdiff_t>(k * static_cast<std::size_t>(cfg.restarts));
    std::vector<RestartResult> rr(std::make_move_iterator(first), std::make_move_iterator(first + cfg.restarts));
    results[p.slot] = assemble(generator, p.cls, p.seed, std::move(rr));
    if (!results[p.slot].ok()) std::clog << *results[p.slot].error << "\n";
    if (options.output_dir) save_attack(results[p.slot], attack_path(*options.output_dir, p.cls, p.seed));
  }
  if (options.output_dir) write_attack_index(results, *options.output_dir);
  return results;
}

void save_attack(const AttackResult& result, const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  const auto r = static_cast<std::int64_t>(result.restarts.size());
  std::int64_t len = 0;
  for (const auto& rr : result.restarts) len = std::max<std::int64_t>(len, static_cast<std::int64_t>(rr.curve.size()));
  auto curves = torch::full({r, len}, std::numeric_limits<double>::quiet_NaN(), torch::kFloat64);
  auto mins = curves.clone();
  auto finals = torch::empty({r}, torch::kFloat64);
  auto seeds = torch::empty({r}, torch::kInt64);
  auto failed = torch::zeros({r}, torch::kBool);
  std::vector<torch::Tensor> zs;
  for (std::int64_t i = 0; i < r; ++i) {
    const auto& rr = result.restarts[static_cast<std::size_t>(i)];
    const auto n = static_cast<std::int64_t>(rr.curve.size());
    if (n > 0) {
      curves[i].slice(0, 0, n).copy_(torch::tensor(rr.curve, torch::kFloat64));
      mins[i].slice(0, 0, n).copy_(torch::tensor(rr.running_min, torch::kFloat64));
    }
    finals[i] = rr.final_objective;
    seeds[i] = as_signed(rr.seed);
    failed[i] = rr.failure.has_value();
    zs.push_back(rr.z);
  }
  torch::serialize::OutputArchive a;
  a.write("target_class", torch::tensor(result.target_class));
  a.write("seed", torch::tensor(as_signed(result.seed)));
  a.write("best", torch::tensor(result.best));
  a.write("restart_seeds", seeds);
  a.write("restart_z", torch::stack(zs));
  a.write("final_objective", finals);
  a.write("curves", curves);
  a.write("running_min", mins);
  a.write("failed", failed);
  a.write("x_all", result.x_all);
  if (result.ok()) {
    a.write("z_star", result.z_star);
    a.write("x_star", result.x_star);
  }
  a.save_to(path.string());
}

AttackResult load_attack(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kDependency, "missing attack file " + path.string());
  torch::serialize::InputArchive a;
  try {
    a.load_from(path.string());
  } catch (const std::exception& e) {
    fail(ErrorKind::kIo, "cannot read attack file " + path.string() + ": " + e.what());
  }
  auto read = [&](const char* key) {
    torch::Tensor t;
    a.read(key, t);
    return t;
  };
  AttackResult res;
  res.target_class = read("target_class").item<std::int64_t>();
  res.seed = as_unsigned(read("seed").item<std::int64_t>());
  res.best = read("best").item<std::int64_t>();
  auto seeds = read("restart_seeds"), z = read("restart_z"), finals = read("final_objective");
  auto curves = read("curves"), mins = read("running_min"), failed = read("failed");
  res.x_all = read("x_all");
  for (std::int64_t i = 0; i < seeds.size(0); ++i) {
    RestartResult rr;
    rr.seed = as_unsigned(seeds[i].item<std::int64_t>());
    rr.z = z[i].clone();
    rr.final_objective = finals[i].item<double>();
    auto c = curves[i], m = mins[i];
    for (std::int64_t t = 0; t < c.size(0); ++t) {
      const double v = c[t].item<double>();
      if (std::isnan(v)) break;
      rr.curve.push_back(v);
      rr.running_min.push_back(m[t].item<double>());
    }
    if (failed[i].item<bool>()) rr.failure = "restart failed";
    res.restarts.push_back(std::move(rr));
  }
  if (res.best >= 0) {
    res.z_star = read("z_star");
    res.x_star = read("x_star");
  } else {
    res.error = "all restarts failed for class " + std::to_string(res.target_class);
  }
  return res;
}

void write_attack_index(const std::vector<AttackResult>& results, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "index.csv");
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "index.csv").string());
  out << "class,seed,best_restart,final_objective,status,path\n" << std::setprecision(9);
  for (const auto& r : results) {
    out << r.target_class << ',' << r.seed << ',' << r.best << ',' << r.best_objective() << ','
        << (r.ok() ? "ok" : "failed") << ','
        << std::filesystem::relative(attack_path(dir, r.target_class, r.seed), dir).string() << '\n';
  }
}

torch::Tensor view_consistency(const models::Classifier& target, const torch::Tensor& images,
                               const torch::Tensor& classes, const gan::AugmentationPolicy& policy,
                               std::int64_t views, gan::Engine& rng) {
  torch::NoGradGuard guard;
  auto hits = torch::zeros({images.size(0)}, torch::kInt64);
  for (std::int64_t v = 0; v < views; ++v) {
    auto pred = target.logits(gan::apply_augmentations(images, policy, rng)).argmax(1);
    hits += pred.eq(classes).to(torch::kInt64);
  }
  return hits;
}

inversion::StageTwoStep make_stage_two_step(gan::ConditionalGenerator generator, const models::Classifier& target,
                                            const std::vector<std::int64_t>& classes,
                                            const std::vector<std::uint64_t>& seeds, const ReconstructConfig& cfg) {
  require(classes.size() == seeds.size() && !seeds.empty(), ErrorKind::kInvalidArgument,
          "one class per latent seed is required");
  check_request(generator, target, classes, cfg);
  generator->eval();
  struct State {
    gan::ConditionalGenerator generator;
    models::Classifier target;
    ReconstructConfig cfg;
    torch::Tensor classes;
    torch::Tensor z;
    std::unique_ptr<torch::optim::Adam> opt;
    std::vector<gan::Engine> rngs;
  };
  auto st = std::make_shared<State>(State{generator, target, cfg, torch::tensor(classes), {}, nullptr, engines(seeds, kViews)});
  st->z = initial_latents(seeds, generator->options().latent_dim).requires_grad_(true);
  st->opt = std::make_unique<torch::optim::Adam>(std::vector<torch::Tensor>{st->z},
                                                 torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2}));
  return [st](std::int64_t) {
    torch::Tensor logits;
    auto obj = multi_view_objective(st->generator, st->target, st->z, st->classes, st->cfg, st->rngs, &logits);
    auto grads = torch::autograd::grad({obj.sum()}, {st->z, logits});
    inversion::StepObservation o;
    o.logits = logits.detach();
    o.logit_grad = grads[1].detach();
    o.targets = st->classes.repeat({st->cfg.views});
    o.losses = inversion::inversion_loss(st->cfg.loss, o.logits, o.targets);
    o.latent_grad_l1 = grads[0].abs().sum(1).mean().item<double>();
    st->z.mutable_grad() = grads[0];
    st->opt->step();
    return o;
  };
}

}  // namespace plgmi::attack
