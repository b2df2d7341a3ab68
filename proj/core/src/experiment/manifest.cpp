#include "plgmi/experiment/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <set>

#include "plgmi/error.hpp"
#include "plgmi/util/hash.hpp"
#include "plgmi/util/seed.hpp"

namespace plgmi::experiment {
namespace {

using json = nlohmann::json;

// Reads fields from one object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j_.is_object(), ErrorKind::kInvalidArgument, where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    try {
      out = j_[key].get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidArgument, where_ + "." + key + ": " + e.what());
    }
  }

  template <typename T>
  void get_opt(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_[key].is_null()) return;
    T v{};
    get(key, v);
    out = v;
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) && !j_[key].is_null() ? &j_[key] : nullptr;
  }

  void done() const {
    for (const auto& [k, _] : j_.items()) {
      require(seen_.count(k) > 0, ErrorKind::kInvalidArgument, "unknown key " + where_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json shape_json(const data::ImageShape& s) { return {s.channels, s.height, s.width}; }

data::ImageShape shape_from(const std::vector<std::int64_t>& v, const std::string& where) {
  require(v.size() == 3, ErrorKind::kInvalidArgument, where + " must be [C, H, W]");
  return {v[0], v[1], v[2]};
}

json opt_path(const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); }
json opt_int(const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); }

json classifier_json(const ClassifierSection& c) {
  return {{"architecture", c.arch.id},     {"width", c.arch.width},
          {"epochs", c.train.epochs},       {"batch_size", c.train.batch_size},
          {"lr", c.train.lr},               {"weight_decay", c.train.weight_decay}};
}

void classifier_from(const json& j, ClassifierSection& c, const std::string& where) {
  Reader r(j, where);
  r.get("architecture", c.arch.id);
  r.get("width", c.arch.width);
  r.get("epochs", c.train.epochs);
  r.get("batch_size", c.train.batch_size);
  r.get("lr", c.train.lr);
  r.get("weight_decay", c.train.weight_decay);
  r.done();
}

void betas_from(Reader& r, const char* key, double& b1, double& b2, const std::string& where) {
  std::vector<double> betas{b1, b2};
  r.get(key, betas);
  require(betas.size() == 2, ErrorKind::kInvalidArgument, where + "." + key + " must have two entries");
  b1 = betas[0];
  b2 = betas[1];
}

}  // namespace

RunManifest RunManifest::defaults() {
  RunManifest m;
  m.target.arch.id = "resnet-s";
  m.eval_model.arch.id = "vgg-s";
  m.eval_model.arch.width = 16;
  m.attack.reconstruct.restarts = 5;
  m.attack.reconstruct.iterations = 600;
  return m;
}

json augmentation_to_json(const gan::AugmentationPolicy& p) {
  return {{"crop", {{"enabled", p.crop.enabled}, {"min_scale", p.crop.min_scale}, {"max_scale", p.crop.max_scale}}},
          {"flip", {{"enabled", p.flip.enabled}, {"probability", p.flip.probability}}},
          {"rotation", {{"enabled", p.rotation.enabled}, {"max_degrees", p.rotation.max_degrees}}},
          {"jitter",
           {{"enabled", p.jitter.enabled},
            {"brightness", p.jitter.brightness},
            {"contrast", p.jitter.contrast},
            {"saturation", p.jitter.saturation}}}};
}

gan::AugmentationPolicy augmentation_from_json(const json& j) {
  gan::AugmentationPolicy p;
  Reader r(j, "aug");
  if (const auto* c = r.sub("crop")) {
    Reader s(*c, "aug.crop");
    s.get("enabled", p.crop.enabled);
    s.get("min_scale", p.crop.min_scale);
    s.get("max_scale", p.crop.max_scale);
    s.done();
  }
  if (const auto* f = r.sub("flip")) {
    Reader s(*f, "aug.flip");
    s.get("enabled", p.flip.enabled);
    s.get("probability", p.flip.probability);
    s.done();
  }
  if (const auto* t = r.sub("rotation")) {
    Reader s(*t, "aug.rotation");
    s.get("enabled", p.rotation.enabled);
    s.get("max_degrees", p.rotation.max_degrees);
    s.done();
  }
  if (const auto* t = r.sub("jitter")) {
    Reader s(*t, "aug.jitter");
    s.get("enabled", p.jitter.enabled);
    s.get("brightness", p.jitter.brightness);
    s.get("contrast", p.jitter.contrast);
    s.get("saturation", p.jitter.saturation);
    s.done();
  }
  r.done();
  return p;
}

json to_json(const RunManifest& m) {
  const auto& d = m.data;
  const auto& g = m.gan;
  const auto& a = m.attack.reconstruct;
  json losses = json::array();
  for (auto l : m.analyze.losses) losses.push_back(std::string(inversion::to_string(l)));
  json stages = json::object();
  for (const auto& [name, rec] : m.stages) stages[name] = {{"input_hash", rec.input_hash}, {"artifacts", rec.artifacts}};
  return {
      {"run_id", m.run_id},
      {"workdir", m.workdir.string()},
      {"seed", m.seed},
      {"deterministic", m.deterministic},
      {"jobs", m.jobs},
      {"data",
       {{"dataset", d.dataset},
        {"root", d.root.string()},
        {"image_shape", shape_json(d.image_shape)},
        {"private_labels", d.private_labels},
        {"public_labels", d.public_labels},
        {"private_index_file", opt_path(d.private_index_file)},
        {"public_index_file", opt_path(d.public_index_file)},
        {"max_private", opt_int(d.max_private)},
        {"max_public", opt_int(d.max_public)},
        {"eval_max_records", opt_int(d.eval_max_records)}}},
      {"target", classifier_json(m.target)},
      {"eval_model", classifier_json(m.eval_model)},
      {"selection", {{"n", m.selection.n}, {"score", std::string(selection::to_string(m.selection.score))}}},
      {"gan",
       {{"latent_dim", g.latent_dim},
        {"g_channels", g.g_channels},
        {"d_channels", g.d_channels},
        {"batch_size", g.batch_size},
        {"g_lr", g.g_lr},
        {"d_lr", g.d_lr},
        {"betas", {g.beta1, g.beta2}},
        {"total_iters", g.total_iters},
        {"d_steps", g.d_steps},
        {"alpha", g.alpha},
        {"inv_loss", std::string(inversion::to_string(g.inv_loss))},
        {"sn_power_iterations", g.sn_power_iterations},
        {"sn_refresh_iterations", g.sn_refresh_iterations},
        {"sn_refresh_tolerance", g.sn_refresh_tolerance},
        {"checkpoint_every", g.checkpoint_every},
        {"aug", augmentation_to_json(g.aug)}}},
      {"attack",
       {{"restarts", a.restarts},
        {"iterations", a.iterations},
        {"views", a.views},
        {"lr", a.lr},
        {"betas", {a.beta1, a.beta2}},
        {"inv_loss", std::string(inversion::to_string(a.loss))},
        {"chunk_rows", a.chunk_rows},
        {"images_per_class", m.attack.images_per_class},
        {"aug", augmentation_to_json(a.policy)}}},
      {"evaluate",
       {{"seed_groups", m.evaluate.seed_groups}, {"include_all_restarts", m.evaluate.include_all_restarts}}},
      {"analyze",
       {{"latents_per_class", m.analyze.latents_per_class},
        {"iterations", m.analyze.iterations},
        {"losses", losses}}},
      {"reuse", m.reuse},
      {"paths", m.paths},
      {"stages", stages},
  };
}

RunManifest manifest_from_json(const json& j) {
  auto m = RunManifest::defaults();
  Reader r(j, "manifest");
  r.get("run_id", m.run_id);
  std::string workdir = m.workdir.string();
  r.get("workdir", workdir);
  m.workdir = workdir;
  r.get("seed", m.seed);
  r.get("deterministic", m.deterministic);
  r.get("jobs", m.jobs);

  if (const auto* d = r.sub("data")) {
    Reader s(*d, "data");
    s.get("dataset", m.data.dataset);
    std::string root = m.data.root.string();
    s.get("root", root);
    m.data.root = root;
    std::vector<std::int64_t> shape{m.data.image_shape.channels, m.data.image_shape.height, m.data.image_shape.width};
    s.get("image_shape", shape);
    m.data.image_shape = shape_from(shape, "data.image_shape");
    s.get("private_labels", m.data.private_labels);
    s.get("public_labels", m.data.public_labels);
    std::optional<std::string> pi, pu;
    s.get_opt("private_index_file", pi);
    s.get_opt("public_index_file", pu);
    if (pi) m.data.private_index_file = *pi;
    if (pu) m.data.public_index_file = *pu;
    s.get_opt("max_private", m.data.max_private);
    s.get_opt("max_public", m.data.max_public);
    s.get_opt("eval_max_records", m.data.eval_max_records);
    s.done();
  }
  if (const auto* t = r.sub("target")) classifier_from(*t, m.target, "target");
  if (const auto* t = r.sub("eval_model")) classifier_from(*t, m.eval_model, "eval_model");
  if (const auto* t = r.sub("selection")) {
    Reader s(*t, "selection");
    s.get("n", m.selection.n);
    std::string score(selection::to_string(m.selection.score));
    s.get("score", score);
    m.selection.score = selection::parse_score_kind(score);
    s.done();
  }
  if (const auto* t = r.sub("gan")) {
    auto& g = m.gan;
    Reader s(*t, "gan");
    s.get("latent_dim", g.latent_dim);
    s.get("g_channels", g.g_channels);
    s.get("d_channels", g.d_channels);
    s.get("batch_size", g.batch_size);
    s.get("g_lr", g.g_lr);
    s.get("d_lr", g.d_lr);
    betas_from(s, "betas", g.beta1, g.beta2, "gan");
    s.get("total_iters", g.total_iters);
    s.get("d_steps", g.d_steps);
    s.get("alpha", g.alpha);
    std::string loss(inversion::to_string(g.inv_loss));
    s.get("inv_loss", loss);
    g.inv_loss = inversion::parse_inversion_loss(loss);
    s.get("sn_power_iterations", g.sn_power_iterations);
    s.get("sn_refresh_iterations", g.sn_refresh_iterations);
    s.get("sn_refresh_tolerance", g.sn_refresh_tolerance);
    s.get("checkpoint_every", g.checkpoint_every);
    if (const auto* aug = s.sub("aug")) g.aug = augmentation_from_json(*aug);
    s.done();
    require(g.alpha >= 0.0, ErrorKind::kInvalidArgument, "gan.alpha must be >= 0");
  }
  if (const auto* t = r.sub("attack")) {
    auto& a = m.attack.reconstruct;
    Reader s(*t, "attack");
    s.get("restarts", a.restarts);
    s.get("iterations", a.iterations);
    s.get("views", a.views);
    s.get("lr", a.lr);
    betas_from(s, "betas", a.beta1, a.beta2, "attack");
    std::string loss(inversion::to_string(a.loss));
    s.get("inv_loss", loss);
    a.loss = inversion::parse_inversion_loss(loss);
    s.get("chunk_rows", a.chunk_rows);
    s.get("images_per_class", m.attack.images_per_class);
    if (const auto* aug = s.sub("aug")) a.policy = augmentation_from_json(*aug);
    s.done();
  }
  if (const auto* t = r.sub("evaluate")) {
    Reader s(*t, "evaluate");
    s.get("seed_groups", m.evaluate.seed_groups);
    s.get("include_all_restarts", m.evaluate.include_all_restarts);
    s.done();
  }
  if (const auto* t = r.sub("analyze")) {
    Reader s(*t, "analyze");
    s.get("latents_per_class", m.analyze.latents_per_class);
    s.get("iterations", m.analyze.iterations);
    std::vector<std::string> losses;
    s.get("losses", losses);
    if (!losses.empty()) {
      m.analyze.losses.clear();
      for (const auto& l : losses) m.analyze.losses.push_back(inversion::parse_inversion_loss(l));
    }
    s.done();
  }
  r.get("reuse", m.reuse);
  r.get("paths", m.paths);
  if (const auto* st = r.sub("stages")) {
    for (const auto& [name, rec] : st->items()) {
      StageRecord sr;
      Reader s(rec, "stages." + name);
      s.get("input_hash", sr.input_hash);
      s.get("artifacts", sr.artifacts);
      s.done();
      m.stages[name] = sr;
    }
  }
  r.done();
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorKind::kIo, "manifest not found: " + path.string());
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, "cannot parse manifest " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << std::setw(2) << to_json(m) << "\n";
}

std::string section_hash(const json& section, const std::vector<std::string>& extra) {
  util::Sha256 h;
  h.update(section.dump());
  for (const auto& e : extra) h.update(e);
  return h.hex();
}

std::string config_hash(const RunManifest& m) {
  auto j = to_json(m);
  j.erase("paths");
  j.erase("stages");
  return section_hash(j);
}

std::uint64_t stage_seed(const RunManifest& m, SeedScope scope) {
  return util::derive_seed(m.seed, {static_cast<std::uint64_t>(scope)});
}

}  // namespace plgmi::experiment
