#include "plgmi/experiment/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "plgmi/error.hpp"
#include "plgmi/experiment/pipeline.hpp"

namespace plgmi::experiment {
namespace {

struct GlobalFlags {
  std::string config;
  std::string run_id;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> jobs;
  std::string workdir;
  std::string data_root;
  bool force = false;
  bool deterministic = false;
  bool quiet = false;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kExitInvalidArgument;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kDependency: return kExitDependency;
    case ErrorKind::kNumerical: return kExitNumerical;
    case ErrorKind::kIo: return kExitIo;
  }
  return kExitUnexpected;
}

RunManifest resolve(const GlobalFlags& f) {
  RunManifest m = f.config.empty() ? RunManifest::defaults() : load_manifest(f.config);
  if (!f.run_id.empty()) m.run_id = f.run_id;
  if (!f.workdir.empty()) m.workdir = f.workdir;
  if (f.config.empty()) {
    // Without --config, continue from the stored manifest of this run.
    const auto stored = m.workdir / "manifests" / (m.run_id + ".json");
    if (std::filesystem::exists(stored)) m = load_manifest(stored);
  }
  if (f.seed) m.seed = *f.seed;
  if (f.jobs) m.jobs = *f.jobs;
  if (!f.data_root.empty()) m.data.root = f.data_root;
  if (f.deterministic) m.deterministic = true;
  // Stage records persist across invocations even when --config is reused.
  const auto stored = m.workdir / "manifests" / (m.run_id + ".json");
  if (!f.config.empty() && std::filesystem::exists(stored)) {
    auto old = load_manifest(stored);
    m.stages = old.stages;
    m.paths = old.paths;
  }
  return m;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void print_outcome(std::ostream& out, const StageOutcome& o) {
  out << o.stage << ": " << (o.skipped ? "up to date" : "done");
  for (const auto& a : o.artifacts) out << "\n  " << a.string();
  out << "\n";
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pseudo-label guided model inversion: staged experiment runner"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags f;
  app.add_option("--config", f.config, "Run manifest (JSON)")->envname("PLG_CONFIG");
  app.add_option("--run-id", f.run_id, "Run identifier")->envname("PLG_RUN_ID");
  app.add_option("--seed", f.seed, "Run seed")->envname("PLG_SEED");
  app.add_option("--jobs", f.jobs, "Worker threads for stage-2")->envname("PLG_JOBS");
  app.add_option("--workdir", f.workdir, "Root directory for artifacts")->envname("PLG_WORKDIR");
  app.add_option("--data-root", f.data_root, "Dataset root directory")->envname("PLG_DATA_ROOT");
  app.add_flag("--force", f.force, "Rerun stages whose artifacts are up to date")->envname("PLG_FORCE");
  app.add_flag("--deterministic", f.deterministic, "Single-threaded, deterministic kernels")
      ->envname("PLG_DETERMINISTIC");
  app.add_flag("--quiet", f.quiet, "Suppress progress output");

  auto* init = app.add_subcommand("init", "Write a manifest with default settings");
  std::string init_path;
  init->add_option("path", init_path, "Output path")->required();

  auto* show = app.add_subcommand("show-config", "Print the resolved manifest and its hash");
  app.add_subcommand("train-target", "Train the target classifier on the private split");
  app.add_subcommand("train-eval", "Train the evaluation classifier");
  auto* sel = app.add_subcommand("select", "Top-n pseudo-labeling of the public data");
  std::optional<std::int64_t> n;
  sel->add_option("--n", n, "Images per class");
  auto* tg = app.add_subcommand("train-gan", "Train the conditional GAN");
  std::optional<std::int64_t> gan_iters;
  std::optional<double> alpha;
  tg->add_option("--iters", gan_iters, "Total GAN iterations");
  tg->add_option("--alpha", alpha, "Inversion regularizer weight");
  auto* inv = app.add_subcommand("invert", "Stage-2 latent reconstruction");
  std::optional<std::int64_t> ipc, attack_iters, views, restarts;
  std::optional<std::string> loss;
  inv->add_option("--images-per-class", ipc, "Reconstructions per class");
  inv->add_option("--iters", attack_iters, "Optimization steps per restart");
  inv->add_option("--views", views, "Augmented views per step (m)");
  inv->add_option("--restarts", restarts, "Random restarts (R)");
  inv->add_option("--loss", loss, "ce, max_margin or poincare");
  app.add_subcommand("evaluate", "Attack accuracy, KNN distance and FID report");
  app.add_subcommand("analyze-loss", "Gradient and loss trend curves per inversion loss");
  auto* abl = app.add_subcommand("ablate", "Sweep one setting and report attack accuracy and FID");
  std::string axis, values;
  bool retrain_gan = false;
  abl->add_option("--axis", axis, "inv_loss, n, alpha or m")->required();
  abl->add_option("--values", values, "Comma-separated values")->required();
  abl->add_flag("--retrain-gan", retrain_gan, "For inv_loss: also train a GAN per loss");
  app.add_subcommand("run-all", "train-target, train-eval, select, train-gan, invert, evaluate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitInvalidArgument;
  }

  try {
    if (init->parsed()) {
      auto m = RunManifest::defaults();
      if (!f.run_id.empty()) m.run_id = f.run_id;
      save_manifest(m, init_path);
      out << "wrote " << init_path << "\n";
      return kExitOk;
    }
    auto m = resolve(f);
    if (gan_iters) m.gan.total_iters = *gan_iters;
    if (alpha) m.gan.alpha = *alpha;
    if (ipc) m.attack.images_per_class = *ipc;
    if (attack_iters) m.attack.reconstruct.iterations = *attack_iters;
    if (views) m.attack.reconstruct.views = *views;
    if (restarts) m.attack.reconstruct.restarts = *restarts;
    if (loss) m.attack.reconstruct.loss = inversion::parse_inversion_loss(*loss);
    if (show->parsed()) {
      out << std::setw(2) << to_json(m) << "\nconfig_hash " << config_hash(m) << "\n";
      return kExitOk;
    }

    PipelineOptions opts;
    opts.force = f.force;
    opts.log = f.quiet ? nullptr : &err;
    Pipeline p(m, opts);
    const auto name = app.get_subcommands().front()->get_name();
    if (name == "train-target") print_outcome(out, p.train_target());
    else if (name == "train-eval") print_outcome(out, p.train_eval());
    else if (name == "select") print_outcome(out, p.select(n));
    else if (name == "train-gan") print_outcome(out, p.train_gan());
    else if (name == "invert") print_outcome(out, p.invert());
    else if (name == "evaluate") print_outcome(out, p.evaluate());
    else if (name == "analyze-loss") print_outcome(out, p.analyze_loss());
    else if (name == "run-all") {
      for (const auto& o : p.run_all()) print_outcome(out, o);
    } else if (name == "ablate") {
      auto rows = p.ablate(axis, split_csv(values), retrain_gan);
      out << "ablation " << axis << " -> " << p.artifact("ablation_" + axis).string() << "\n";
      int failed = 0;
      for (const auto& r : rows) {
        out << "  " << r.value << ": "
            << (r.error ? "failed (" + *r.error + ")" : "attack_acc " + std::to_string(*r.attack_acc)) << "\n";
        failed += r.error ? 1 : 0;
      }
      return failed == static_cast<int>(rows.size()) ? kExitUnexpected : kExitOk;
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error [unexpected]: " << e.what() << "\n";
    return kExitUnexpected;
  }
}

}  // namespace plgmi::experiment
