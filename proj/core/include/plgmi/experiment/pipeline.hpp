#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "plgmi/data/dataset_registry.hpp"
#include "plgmi/eval/report.hpp"
#include "plgmi/experiment/manifest.hpp"

namespace plgmi::experiment {

struct PipelineOptions {
  bool force = false;
  std::ostream* log = nullptr;  // progress lines; null for silence
};

struct StageOutcome {
  std::string stage;
  bool skipped = false;  // artifacts were already up to date
  std::vector<std::filesystem::path> artifacts;
};

struct AblationRow {
  std::string value;
  std::string run_id;
  std::optional<double> attack_acc;
  std::optional<double> attack_acc_top5;
  std::optional<double> knn_dist;
  std::optional<double> fid;
  std::optional<std::string> error;
};

// Stage runner over one manifest. Every stage checks its upstream artifacts,
// skips itself when its inputs and outputs are unchanged (unless forced) and
// writes the updated manifest to <workdir>/manifests/<run_id>.json.
class Pipeline {
 public:
  explicit Pipeline(RunManifest manifest, PipelineOptions options = {});

  StageOutcome train_target();
  StageOutcome train_eval();
  StageOutcome select(std::optional<std::int64_t> n = std::nullopt);
  StageOutcome train_gan();
  StageOutcome invert();
  StageOutcome evaluate();
  StageOutcome analyze_loss();
  std::vector<AblationRow> ablate(const std::string& axis, const std::vector<std::string>& values,
                                  bool retrain_gan = false);
  // train-target through evaluate.
  std::vector<StageOutcome> run_all();

  const RunManifest& manifest() const { return manifest_; }
  std::filesystem::path manifest_path() const;
  // Absolute artifact location, honouring the manifest's reuse table.
  std::filesystem::path artifact(const std::string& kind) const;
  const data::DatasetSplit& split();
  nlohmann::json load_report() const;

 private:
  StageOutcome run_stage(const std::string& name, const std::string& input_hash,
                         const std::vector<std::string>& outputs, const std::function<void()>& body);
  std::filesystem::path require_artifact(const std::string& kind, const std::string& stage,
                                         const std::string& producer) const;
  std::string artifact_hash(const std::string& kind) const;
  void log(const std::string& line) const;

  RunManifest manifest_;
  PipelineOptions options_;
  std::optional<data::DatasetSplit> split_;
};

// Reads an attack directory through its index.csv, in index order.
std::vector<attack::AttackResult> load_attack_dir(const std::filesystem::path& dir);

void write_ablation_csv(const std::string& axis, const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

}  // namespace plgmi::experiment
