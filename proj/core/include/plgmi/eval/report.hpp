#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "plgmi/attack/reconstructor.hpp"
#include "plgmi/data/image_batch.hpp"
#include "plgmi/models/classifier.hpp"

namespace plgmi::eval {

struct ReportConfig {
  // Attacks of one class are split round-robin into this many seed groups;
  // deviations are taken across the groups' accuracies.
  std::int64_t seed_groups = 5;
  bool include_all_restarts = true;
  // Evaluation-model label of each private class; empty means identity.
  std::vector<std::int64_t> eval_labels;
  nlohmann::json echo;  // copied verbatim into the report
};

struct MetricBlock {
  double top1 = 0.0;
  double top5 = 0.0;
  double top1_std = 0.0;
  double top5_std = 0.0;
  std::optional<double> knn_dist;
  std::optional<double> fid;  // absent when nothing succeeded
  std::int64_t n_success = 0;
  std::int64_t n_total = 0;
  std::vector<std::string> warnings;
};

struct ClassBreakdown {
  std::int64_t target_class = 0;
  double top1 = 0.0;
  double top5 = 0.0;
  std::optional<double> knn_dist;
  std::int64_t n_success = 0;
  std::int64_t n_total = 0;
};

struct EvaluationReport {
  MetricBlock selected;                    // one reconstruction per attack
  std::optional<MetricBlock> all_restarts;  // every surviving restart
  std::vector<ClassBreakdown> per_class;
  double top1_std_across_classes = 0.0;
  nlohmann::json echo;
};

// images: reconstructions; targets: their private classes; groups: seed-group
// ids. Attacks that produced no image are listed by seed group and count as
// misses. private_set is labeled with private class indices.
MetricBlock evaluate_block(const models::Classifier& eval_model, const torch::Tensor& images,
                           const torch::Tensor& targets, const std::vector<std::int64_t>& eval_labels,
                           const std::vector<std::int64_t>& groups, const std::vector<std::int64_t>& failed_groups,
                           const data::ImageBatch& private_set);

EvaluationReport build_report(const std::vector<attack::AttackResult>& results,
                              const models::Classifier& eval_model, const data::ImageBatch& private_set,
                              const ReportConfig& config = {});

nlohmann::json to_json(const EvaluationReport& report);
std::string format_table(const EvaluationReport& report);
void write_report(const EvaluationReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& table_path);

}  // namespace plgmi::eval
