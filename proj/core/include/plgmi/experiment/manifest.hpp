#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "plgmi/attack/reconstructor.hpp"
#include "plgmi/data/dataset_registry.hpp"
#include "plgmi/gan/trainer.hpp"
#include "plgmi/models/classifier.hpp"
#include "plgmi/selection/top_n.hpp"

namespace plgmi::experiment {

struct DataSection {
  std::string dataset = "mnist";
  std::filesystem::path root = "data";
  data::ImageShape image_shape{1, 32, 32};
  std::vector<std::int64_t> private_labels{0, 1, 2, 3, 4};
  std::vector<std::int64_t> public_labels{5, 6, 7, 8, 9};
  std::optional<std::filesystem::path> private_index_file;
  std::optional<std::filesystem::path> public_index_file;
  std::optional<std::int64_t> max_private;
  std::optional<std::int64_t> max_public;
  // Cap on records used to train the evaluation model.
  std::optional<std::int64_t> eval_max_records;
};

struct ClassifierSection {
  models::ArchitectureSpec arch;  // num_classes/input filled from the data section
  models::TrainConfig train;      // seed derived from the run seed
};

struct SelectionSection {
  std::int64_t n = 4000;
  selection::ScoreKind score = selection::ScoreKind::kProbability;
};

struct AttackSection {
  attack::ReconstructConfig reconstruct;
  std::int64_t images_per_class = 100;
};

struct EvaluateSection {
  std::int64_t seed_groups = 5;
  bool include_all_restarts = true;
};

struct AnalyzeSection {
  std::int64_t latents_per_class = 4;
  std::int64_t iterations = 300;
  std::vector<inversion::InversionLoss> losses{inversion::InversionLoss::kCrossEntropy,
                                               inversion::InversionLoss::kMaxMargin,
                                               inversion::InversionLoss::kPoincare};
};

struct StageRecord {
  std::string input_hash;
  std::map<std::string, std::string> artifacts;  // path (relative to workdir) -> sha256
};

// Everything needed to replay a run. Output-only tables (paths, stages) are
// excluded from the config hash.
struct RunManifest {
  std::string run_id = "default";
  std::filesystem::path workdir = "runs";
  std::uint64_t seed = 0;
  bool deterministic = false;
  std::int64_t jobs = 1;
  DataSection data;
  ClassifierSection target;
  ClassifierSection eval_model;
  SelectionSection selection;
  gan::GanConfig gan;
  AttackSection attack;
  EvaluateSection evaluate;
  AnalyzeSection analyze;
  // Artifact kind -> run id whose artifact is reused instead of produced.
  std::map<std::string, std::string> reuse;

  std::map<std::string, std::string> paths;
  std::map<std::string, StageRecord> stages;

  static RunManifest defaults();
};

nlohmann::json augmentation_to_json(const gan::AugmentationPolicy& p);
gan::AugmentationPolicy augmentation_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunManifest& m);
// Unknown keys are rejected; missing keys keep their defaults.
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const RunManifest& m, const std::filesystem::path& path);

// SHA-256 of the canonical JSON of all configuration fields.
std::string config_hash(const RunManifest& m);
// Hash of one section's canonical JSON plus extra strings.
std::string section_hash(const nlohmann::json& section, const std::vector<std::string>& extra = {});

// Stage-level seeds derived from the run seed.
enum class SeedScope : std::uint64_t { kSplit = 1, kTarget, kEval, kGan, kAttack, kAnalyze };
std::uint64_t stage_seed(const RunManifest& m, SeedScope scope);

}  // namespace plgmi::experiment
