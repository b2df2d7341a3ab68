#include "plgmi/experiment/pipeline.hpp"

#include <ATen/Context.h>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "plgmi/error.hpp"
#include "plgmi/util/hash.hpp"
#include "plgmi/util/seed.hpp"

namespace plgmi::experiment {
namespace {

using json = nlohmann::json;

struct ArtifactKind {
  const char* kind;
  const char* dir;
  const char* file;
};

constexpr ArtifactKind kArtifacts[] = {
    {"target", "models", "target.pt"},           {"eval", "models", "eval.pt"},
    {"selection", "selections", "top_n.json"},   {"gan", "checkpoints", "gan_final.ckpt"},
    {"gan_loss", "checkpoints", "gan_loss.csv"}, {"attacks", "attacks", "index.csv"},
    {"report", "reports", "report.json"},        {"report_table", "reports", "report.txt"},
};

std::string sanitize(const std::string& v) {
  std::string out;
  for (char c : v) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_') ? c : '_';
  return out;
}

std::vector<std::int64_t> all_classes(std::int64_t k) {
  std::vector<std::int64_t> v(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(9) << *v;
  return s.str();
}

}  // namespace

Pipeline::Pipeline(RunManifest manifest, PipelineOptions options)
    : manifest_(std::move(manifest)), options_(options) {
  require(!manifest_.run_id.empty(), ErrorKind::kInvalidArgument, "run_id must not be empty");
  if (manifest_.deterministic) {
    at::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
  }
}

std::filesystem::path Pipeline::manifest_path() const {
  return manifest_.workdir / "manifests" / (manifest_.run_id + ".json");
}

std::filesystem::path Pipeline::artifact(const std::string& kind) const {
  std::string owner = manifest_.run_id;
  if (auto it = manifest_.reuse.find(kind); it != manifest_.reuse.end()) owner = it->second;
  if (kind == "gan_loss") {
    if (auto it = manifest_.reuse.find("gan"); it != manifest_.reuse.end()) owner = it->second;
  }
  for (const auto& a : kArtifacts) {
    if (kind == a.kind) return manifest_.workdir / a.dir / owner / a.file;
  }
  if (kind.rfind("trend_", 0) == 0) return manifest_.workdir / "traces" / owner / (kind.substr(6) + ".csv");
  if (kind.rfind("ablation_", 0) == 0) return manifest_.workdir / "ablations" / owner / (kind.substr(9) + ".csv");
  fail(ErrorKind::kInvalidArgument, "unknown artifact kind " + kind);
}

void Pipeline::log(const std::string& line) const {
  if (options_.log) *options_.log << "[" << manifest_.run_id << "] " << line << std::endl;
}

std::filesystem::path Pipeline::require_artifact(const std::string& kind, const std::string& stage,
                                                 const std::string& producer) const {
  auto p = artifact(kind);
  require(std::filesystem::exists(p), ErrorKind::kDependency,
          "stage '" + stage + "' needs the output of stage '" + producer + "' (missing " + p.string() + ")");
  return p;
}

std::string Pipeline::artifact_hash(const std::string& kind) const { return util::sha256_file(artifact(kind)); }

StageOutcome Pipeline::run_stage(const std::string& name, const std::string& input_hash,
                                 const std::vector<std::string>& outputs, const std::function<void()>& body) {
  StageOutcome out;
  out.stage = name;
  for (const auto& k : outputs) out.artifacts.push_back(artifact(k));

  if (!options_.force) {
    if (auto it = manifest_.stages.find(name); it != manifest_.stages.end() && it->second.input_hash == input_hash) {
      bool fresh = it->second.artifacts.size() == outputs.size();
      for (const auto& k : outputs) {
        const auto rel = std::filesystem::relative(artifact(k), manifest_.workdir).string();
        auto a = it->second.artifacts.find(rel);
        if (!fresh || a == it->second.artifacts.end() || !std::filesystem::exists(artifact(k)) ||
            util::sha256_file(artifact(k)) != a->second) {
          fresh = false;
          break;
        }
      }
      if (fresh) {
        log(name + ": up to date");
        out.skipped = true;
        return out;
      }
    }
  }

  log(name + ": running");
  body();
  StageRecord rec;
  rec.input_hash = input_hash;
  for (const auto& k : outputs) {
    const auto p = artifact(k);
    require(std::filesystem::exists(p), ErrorKind::kIo, "stage '" + name + "' did not produce " + p.string());
    const auto rel = std::filesystem::relative(p, manifest_.workdir).string();
    rec.artifacts[rel] = util::sha256_file(p);
    manifest_.paths[k] = rel;
    // Frozen configuration echo beside the artifact.
    save_manifest(manifest_, p.parent_path() / "manifest.json");
  }
  manifest_.stages[name] = rec;
  save_manifest(manifest_, manifest_path());
  log(name + ": done");
  return out;
}

const data::DatasetSplit& Pipeline::split() {
  if (!split_) {
    const auto& d = manifest_.data;
    data::SplitSpec spec;
    spec.private_labels = d.private_labels;
    spec.public_labels = d.public_labels;
    spec.private_index_file = d.private_index_file;
    spec.public_index_file = d.public_index_file;
    spec.seed = stage_seed(manifest_, SeedScope::kSplit);
    spec.max_private = d.max_private;
    spec.max_public = d.max_public;
    split_ = data::load_split(d.dataset, d.root, spec, d.image_shape);
    log("data: " + std::to_string(split_->private_set.size()) + " private, " +
        std::to_string(split_->public_set.size()) + " public images, " + std::to_string(split_->num_classes) +
        " classes");
  }
  return *split_;
}

StageOutcome Pipeline::train_target() {
  const auto& c = manifest_.target;
  const auto seed = stage_seed(manifest_, SeedScope::kTarget);
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["target"], {j["data"].dump(), std::to_string(seed)});
  return run_stage("train-target", hash, {"target"}, [&] {
    const auto& s = split();
    std::optional<data::ImageBatch> val;
    if (!manifest_.data.private_index_file) {
      try {
        data::SplitSpec vs;
        vs.private_labels = manifest_.data.private_labels;
        vs.public_labels = manifest_.data.public_labels;
        vs.part = "test";
        val = data::load_split(manifest_.data.dataset, manifest_.data.root, vs, manifest_.data.image_shape)
                  .private_set;
      } catch (const Error& e) {
        log(std::string("train-target: no validation data (") + e.what() + ")");
      }
    }
    auto spec = c.arch;
    spec.num_classes = s.num_classes;
    spec.input = s.image_shape;
    auto cfg = c.train;
    cfg.seed = seed;
    auto trained = models::train_classifier(s.private_set, val, spec, cfg);
    log("train-target: train acc " + std::to_string(trained.report.train_accuracy) +
        (trained.report.validation_accuracy ? ", val acc " + std::to_string(*trained.report.validation_accuracy)
                                             : std::string()));
    models::save_classifier(trained.model, {"target", spec, trained.model.feature_dim(), seed, s.dataset_hash,
                                            trained.report},
                            artifact("target"));
  });
}

StageOutcome Pipeline::train_eval() {
  const auto& c = manifest_.eval_model;
  const auto seed = stage_seed(manifest_, SeedScope::kEval);
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["eval_model"], {j["data"].dump(), std::to_string(seed)});
  return run_stage("train-eval", hash, {"eval"}, [&] {
    const auto& d = manifest_.data;
    // The evaluation model sees the original label space of the full training part.
    auto train = data::load_labeled(d.dataset, d.root, "train", d.image_shape, d.eval_max_records, seed);
    std::optional<data::ImageBatch> val;
    try {
      val = data::load_labeled(d.dataset, d.root, "test", d.image_shape);
    } catch (const Error& e) {
      log(std::string("train-eval: no validation data (") + e.what() + ")");
    }
    auto spec = c.arch;
    spec.num_classes = train.labels->max().item<std::int64_t>() + 1;
    if (val) spec.num_classes = std::max(spec.num_classes, val->labels->max().item<std::int64_t>() + 1);
    spec.input = d.image_shape;
    auto cfg = c.train;
    cfg.seed = seed;
    auto trained = models::train_classifier(train, val, spec, cfg);
    log("train-eval: train acc " + std::to_string(trained.report.train_accuracy) +
        (trained.report.validation_accuracy ? ", val acc " + std::to_string(*trained.report.validation_accuracy)
                                             : std::string()));
    models::save_classifier(trained.model, {"evaluation", spec, trained.model.feature_dim(), seed, "", trained.report},
                            artifact("eval"));
  });
}

StageOutcome Pipeline::select(std::optional<std::int64_t> n) {
  if (n) manifest_.selection.n = *n;
  const auto target_path = require_artifact("target", "select", "train-target");
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["selection"], {j["data"].dump(), artifact_hash("target")});
  return run_stage("select", hash, {"selection"}, [&] {
    const auto& s = split();
    auto [target, meta] = models::load_classifier(target_path);
    auto dr = selection::assign_pseudo_labels(s.public_set, target, manifest_.selection.n, s.num_classes,
                                              manifest_.selection.score);
    const auto summary = selection::selection_summary(dr);
    log("select: " + std::to_string(summary.unique_images) + " unique images, " +
        std::to_string(summary.duplicate_count) + " repeats across classes");
    selection::save_selection(dr, artifact("selection"));
  });
}

StageOutcome Pipeline::train_gan() {
  const auto target_path = require_artifact("target", "train-gan", "train-target");
  const auto selection_path = require_artifact("selection", "train-gan", "select");
  const auto seed = stage_seed(manifest_, SeedScope::kGan);
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["gan"], {artifact_hash("target"), artifact_hash("selection"),
                                            j["data"].dump(), std::to_string(seed)});
  return run_stage("train-gan", hash, {"gan", "gan_loss"}, [&] {
    const auto& s = split();
    auto [target, meta] = models::load_classifier(target_path);
    auto dr = selection::load_selection(selection_path);
    auto cfg = manifest_.gan;
    cfg.seed = seed;
    cfg.checkpoint_dir = artifact("gan").parent_path();
    cfg.log_every = options_.log ? std::max<std::int64_t>(1, cfg.total_iters / 10) : 0;
    auto state = gan::train_cgan(dr, s.public_set, target, cfg);
    gan::save_gan_checkpoint(state, cfg, s.image_shape, artifact("gan"));
    gan::write_loss_history(state.history, artifact("gan_loss"));
  });
}

StageOutcome Pipeline::invert() {
  const auto target_path = require_artifact("target", "invert", "train-target");
  const auto gan_path = require_artifact("gan", "invert", "train-gan");
  const auto seed = stage_seed(manifest_, SeedScope::kAttack);
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["attack"], {artifact_hash("target"), artifact_hash("gan"), std::to_string(seed)});
  return run_stage("invert", hash, {"attacks"}, [&] {
    auto [target, meta] = models::load_classifier(target_path);
    auto loaded = gan::load_gan_checkpoint(gan_path);
    attack::BatchAttackOptions opts;
    opts.base_seed = seed;
    opts.jobs = manifest_.jobs;
    opts.output_dir = artifact("attacks").parent_path();
    opts.resume = !options_.force;
    const auto results = attack::batch_attack(loaded.state.models.generator, target, all_classes(target.num_classes()),
                                              manifest_.attack.images_per_class, manifest_.attack.reconstruct, opts);
    std::int64_t failed = 0;
    for (const auto& r : results) failed += r.ok() ? 0 : 1;
    log("invert: " + std::to_string(results.size()) + " attacks, " + std::to_string(failed) + " failed");
    attack::write_attack_index(results, artifact("attacks").parent_path());
  });
}

StageOutcome Pipeline::evaluate() {
  const auto eval_path = require_artifact("eval", "evaluate", "train-eval");
  const auto index = require_artifact("attacks", "evaluate", "invert");
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["evaluate"], {artifact_hash("eval"), artifact_hash("attacks"), j["data"].dump()});
  return run_stage("evaluate", hash, {"report", "report_table"}, [&] {
    const auto& s = split();
    auto [eval_model, meta] = models::load_classifier(eval_path);
    auto results = load_attack_dir(index.parent_path());
    eval::ReportConfig cfg;
    cfg.seed_groups = manifest_.evaluate.seed_groups;
    cfg.include_all_restarts = manifest_.evaluate.include_all_restarts;
    cfg.eval_labels = s.class_labels;
    cfg.echo = {{"run_id", manifest_.run_id},
                {"config_hash", config_hash(manifest_)},
                {"attack", j["attack"]},
                {"gan_alpha", manifest_.gan.alpha},
                {"selection_n", manifest_.selection.n},
                {"eval_architecture", meta.spec.id}};
    auto report = eval::build_report(results, eval_model, s.private_set, cfg);
    eval::write_report(report, artifact("report"), artifact("report_table"));
    if (options_.log) *options_.log << eval::format_table(report);
  });
}

StageOutcome Pipeline::analyze_loss() {
  const auto target_path = require_artifact("target", "analyze-loss", "train-target");
  const auto gan_path = require_artifact("gan", "analyze-loss", "train-gan");
  const auto seed = stage_seed(manifest_, SeedScope::kAnalyze);
  const auto j = to_json(manifest_);
  const auto hash = section_hash(j["analyze"], {j["attack"].dump(), artifact_hash("target"), artifact_hash("gan"),
                                                std::to_string(seed)});
  std::vector<std::string> outputs;
  for (auto l : manifest_.analyze.losses) outputs.push_back("trend_" + std::string(inversion::to_string(l)));
  return run_stage("analyze-loss", hash, outputs, [&] {
    auto [target, meta] = models::load_classifier(target_path);
    auto loaded = gan::load_gan_checkpoint(gan_path);
    std::vector<std::int64_t> classes;
    std::vector<std::uint64_t> seeds;
    for (std::int64_t c = 0; c < target.num_classes(); ++c) {
      for (std::int64_t i = 0; i < manifest_.analyze.latents_per_class; ++i) {
        classes.push_back(c);
        seeds.push_back(attack::attack_seed(seed, c, i));
      }
    }
    for (auto loss : manifest_.analyze.losses) {
      auto cfg = manifest_.attack.reconstruct;
      cfg.loss = loss;
      const auto kind = "trend_" + std::string(inversion::to_string(loss));
      auto step = attack::make_stage_two_step(loaded.state.models.generator, target, classes, seeds, cfg);
      inversion::LossTrace trace;
      try {
        trace = inversion::record_trend(loss, step, manifest_.analyze.iterations);
      } catch (const inversion::TraceAborted& e) {
        log(std::string("analyze-loss: ") + e.what() + "; keeping the partial trace");
        trace = e.partial();
      }
      inversion::write_trace_csv(trace, artifact(kind));
      auto raw = artifact(kind);
      raw.replace_filename(std::string(inversion::to_string(loss)) + "_raw.csv");
      inversion::write_raw_trace_csv(trace, raw);
    }
  });
}

std::vector<StageOutcome> Pipeline::run_all() {
  return {train_target(), train_eval(), select(), train_gan(), invert(), evaluate()};
}

json Pipeline::load_report() const {
  const auto p = require_artifact("report", "ablate", "evaluate");
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

std::vector<AblationRow> Pipeline::ablate(const std::string& axis, const std::vector<std::string>& values,
                                          bool retrain_gan) {
  require(axis == "inv_loss" || axis == "n" || axis == "alpha" || axis == "m", ErrorKind::kInvalidArgument,
          "ablation axis must be one of inv_loss, n, alpha, m; got '" + axis + "'");
  require(!values.empty(), ErrorKind::kInvalidArgument, "ablation needs at least one value");
  const bool reuse_selection = axis != "n";
  const bool reuse_gan = (axis == "inv_loss" && !retrain_gan) || axis == "m";

  // Shared upstream artifacts come from this run.
  train_target();
  train_eval();
  if (reuse_selection) select();
  if (reuse_gan) train_gan();

  auto owner = [&](const std::string& kind) {
    auto it = manifest_.reuse.find(kind);
    return it == manifest_.reuse.end() ? manifest_.run_id : it->second;
  };

  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    AblationRow row;
    row.value = value;
    RunManifest child = manifest_;
    child.run_id = manifest_.run_id + "-" + axis + "-" + sanitize(value);
    child.paths.clear();
    child.stages.clear();
    child.reuse["target"] = owner("target");
    child.reuse["eval"] = owner("eval");
    if (reuse_selection) child.reuse["selection"] = owner("selection");
    if (reuse_gan) child.reuse["gan"] = owner("gan");
    row.run_id = child.run_id;
    try {
      if (axis == "inv_loss") {
        child.attack.reconstruct.loss = inversion::parse_inversion_loss(value);
        if (retrain_gan) child.gan.inv_loss = child.attack.reconstruct.loss;
      } else if (axis == "n") {
        child.selection.n = std::stoll(value);
      } else if (axis == "alpha") {
        child.gan.alpha = std::stod(value);
      } else {
        child.attack.reconstruct.views = std::stoll(value);
      }
      // Keep stage records of an earlier sweep so finished values are skipped.
      const auto prior = manifest_.workdir / "manifests" / (child.run_id + ".json");
      if (std::filesystem::exists(prior)) {
        auto old = load_manifest(prior);
        child.stages = old.stages;
        child.paths = old.paths;
      }
      Pipeline p(child, options_);
      if (!reuse_selection) p.select();
      if (!reuse_gan) p.train_gan();
      p.invert();
      p.evaluate();
      const auto rep = p.load_report();
      const auto& sel = rep.at("selected");
      row.attack_acc = sel.at("attack_acc_top1").get<double>();
      row.attack_acc_top5 = sel.at("attack_acc_top5").get<double>();
      if (!sel.at("knn_dist").is_null()) row.knn_dist = sel.at("knn_dist").get<double>();
      if (!sel.at("fid").is_null()) row.fid = sel.at("fid").get<double>();
    } catch (const std::exception& e) {
      row.error = e.what();
      log("ablate " + axis + "=" + value + " failed: " + e.what());
    }
    rows.push_back(std::move(row));
  }
  write_ablation_csv(axis, rows, artifact("ablation_" + axis));
  return rows;
}

std::vector<attack::AttackResult> load_attack_dir(const std::filesystem::path& dir) {
  const auto index = dir / "index.csv";
  std::ifstream in(index);
  require(static_cast<bool>(in), ErrorKind::kDependency, "missing attack index " + index.string());
  std::string line;
  std::getline(in, line);
  std::vector<attack::AttackResult> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    require(comma != std::string::npos, ErrorKind::kIo, "malformed line in " + index.string());
    out.push_back(attack::load_attack(dir / line.substr(comma + 1)));
  }
  return out;
}

void write_ablation_csv(const std::string& axis, const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "axis,value,run_id,attack_acc,attack_acc_top5,knn_dist,fid,status\n";
  for (const auto& r : rows) {
    out << axis << ',' << r.value << ',' << r.run_id << ',' << fmt_opt(r.attack_acc) << ','
        << fmt_opt(r.attack_acc_top5) << ',' << fmt_opt(r.knn_dist) << ',' << fmt_opt(r.fid) << ','
        << (r.error ? "failed" : "ok") << '\n';
  }
}

}  // namespace plgmi::experiment
