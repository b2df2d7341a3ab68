#include "plgmi/eval/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "plgmi/error.hpp"
#include "plgmi/eval/metrics.hpp"

namespace plgmi::eval {
namespace {

double population_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size()));
}

std::vector<double> group_rates(const std::vector<bool>& hits, const std::vector<std::int64_t>& groups,
                                const std::vector<std::int64_t>& failed_groups) {
  std::map<std::int64_t, std::pair<std::int64_t, std::int64_t>> g;  // group -> (hits, total)
  for (std::size_t i = 0; i < hits.size(); ++i) {
    auto& e = g[groups[i]];
    e.first += hits[i] ? 1 : 0;
    e.second += 1;
  }
  for (auto f : failed_groups) g[f].second += 1;
  std::vector<double> out;
  for (const auto& [_, e] : g) out.push_back(static_cast<double>(e.first) / static_cast<double>(e.second));
  return out;
}

std::vector<bool> to_bools(const torch::Tensor& t) {
  auto c = t.to(torch::kBool).contiguous();
  std::vector<bool> out(static_cast<std::size_t>(c.numel()));
  auto acc = c.accessor<bool, 1>();
  for (std::int64_t i = 0; i < c.numel(); ++i) out[static_cast<std::size_t>(i)] = acc[i];
  return out;
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json block_json(const MetricBlock& b) {
  return {{"attack_acc_top1", b.top1}, {"attack_acc_top1_std", b.top1_std}, {"attack_acc_top5", b.top5},
          {"attack_acc_top5_std", b.top5_std}, {"knn_dist", opt(b.knn_dist)}, {"fid", opt(b.fid)},
          {"n_success", b.n_success}, {"n_total", b.n_total}, {"warnings", b.warnings}};
}

std::string fmt(const std::optional<double>& v, int precision) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

std::string acc(double mean, double sd) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << mean << " +- " << sd;
  return s.str();
}

}  // namespace

MetricBlock evaluate_block(const models::Classifier& eval_model, const torch::Tensor& images,
                           const torch::Tensor& targets, const std::vector<std::int64_t>& eval_labels,
                           const std::vector<std::int64_t>& groups, const std::vector<std::int64_t>& failed_groups,
                           const data::ImageBatch& private_set) {
  require(private_set.labels.has_value(), ErrorKind::kData, "private set must be labeled");
  const auto n_img = images.defined() ? images.size(0) : 0;
  require(static_cast<std::int64_t>(groups.size()) == n_img, ErrorKind::kInvalidArgument,
          "one seed group per reconstruction is required");
  MetricBlock b;
  b.n_total = n_img + static_cast<std::int64_t>(failed_groups.size());
  require(b.n_total > 0, ErrorKind::kInvalidArgument, "report needs at least one attack");
  if (n_img == 0) {
    b.warnings.push_back("no reconstructions: every attack failed");
    return b;
  }

  auto judged = targets;
  if (!eval_labels.empty()) {
    require(targets.max().item<std::int64_t>() < static_cast<std::int64_t>(eval_labels.size()),
            ErrorKind::kInvalidArgument, "no evaluation label for a private class");
    judged = torch::tensor(eval_labels, torch::kInt64).index_select(0, targets);
  }
  require(judged.max().item<std::int64_t>() < eval_model.num_classes(), ErrorKind::kInvalidArgument,
          "evaluation label outside the evaluation model's classes");
  auto hit1 = topk_hits(eval_model, images, judged, 1);
  auto hit5 = topk_hits(eval_model, images, judged, 5);
  const auto h1 = to_bools(hit1), h5 = to_bools(hit5);
  b.n_success = hit1.sum().item<std::int64_t>();
  const double total = static_cast<double>(b.n_total);
  b.top1 = static_cast<double>(b.n_success) / total;
  b.top5 = static_cast<double>(hit5.sum().item<std::int64_t>()) / total;
  b.top1_std = population_std(group_rates(h1, groups, failed_groups));
  b.top5_std = population_std(group_rates(h5, groups, failed_groups));

  // KNN against the private images of each reconstruction's own class.
  auto features = eval_model.penultimate_features({images, std::nullopt});
  auto private_features = eval_model.penultimate_features({private_set.values, std::nullopt});
  auto dist = torch::empty({n_img}, torch::kFloat64);
  bool knn_ok = true;
  auto classes = std::get<0>(torch::_unique(targets)).contiguous();
  for (std::int64_t u = 0; u < classes.size(0); ++u) {
    const auto cls = classes[u].item<std::int64_t>();
    auto rows = targets.eq(cls).nonzero().squeeze(1);
    auto refs = private_features.index_select(0, private_set.labels->eq(cls).nonzero().squeeze(1));
    if (refs.size(0) == 0) {
      b.warnings.push_back("no private images of class " + std::to_string(cls) + "; KNN distance omitted");
      knn_ok = false;
      break;
    }
    dist.index_put_({rows}, nearest_distances(features.index_select(0, rows), refs));
  }
  if (knn_ok) b.knn_dist = dist.mean().item<double>();

  // FID on successful reconstructions only.
  auto success = hit1.nonzero().squeeze(1);
  if (success.size(0) < 2) {
    b.warnings.push_back("fewer than 2 successful reconstructions; FID omitted");
  } else {
    auto reference =
        private_features.index_select(0, torch::isin(*private_set.labels, targets).nonzero().squeeze(1));
    if (reference.size(0) < 2) {
      b.warnings.push_back("fewer than 2 private reference images; FID omitted");
    } else {
      auto fid = compute_fid(features.index_select(0, success), reference);
      b.fid = fid.value;
      for (auto& w : fid.warnings) b.warnings.push_back("FID: " + w);
    }
  }
  return b;
}

EvaluationReport build_report(const std::vector<attack::AttackResult>& results,
                              const models::Classifier& eval_model, const data::ImageBatch& private_set,
                              const ReportConfig& config) {
  require(!results.empty(), ErrorKind::kInvalidArgument, "report needs at least one attack result");
  require(config.seed_groups >= 1, ErrorKind::kInvalidArgument, "seed_groups must be >= 1");
  data::validate(private_set);
  require(private_set.labels.has_value(), ErrorKind::kData, "private set must be labeled");

  std::map<std::int64_t, std::int64_t> position;  // per-class running index
  std::vector<torch::Tensor> sel_img, all_img;
  std::vector<std::int64_t> sel_cls, sel_grp, sel_fail, all_cls, all_grp, all_fail;
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const auto group = position[r.target_class]++ % config.seed_groups;
    by_class[r.target_class].push_back(i);
    if (r.ok()) {
      sel_img.push_back(r.x_star);
      sel_cls.push_back(r.target_class);
      sel_grp.push_back(group);
    } else {
      sel_fail.push_back(group);
    }
    for (std::size_t k = 0; k < r.restarts.size(); ++k) {
      if (r.restarts[k].failure) {
        all_fail.push_back(group);
      } else {
        all_img.push_back(r.x_all[static_cast<std::int64_t>(k)]);
        all_cls.push_back(r.target_class);
        all_grp.push_back(group);
      }
    }
  }
  auto stack = [](const std::vector<torch::Tensor>& v) { return v.empty() ? torch::Tensor() : torch::stack(v); };

  EvaluationReport rep;
  rep.echo = config.echo;
  rep.selected = evaluate_block(eval_model, stack(sel_img), torch::tensor(sel_cls, torch::kInt64), config.eval_labels,
                                sel_grp, sel_fail, private_set);
  if (config.include_all_restarts) {
    rep.all_restarts = evaluate_block(eval_model, stack(all_img), torch::tensor(all_cls, torch::kInt64),
                                      config.eval_labels, all_grp, all_fail, private_set);
  }

  std::vector<double> class_top1;
  for (const auto& [cls, idx] : by_class) {
    std::vector<torch::Tensor> imgs;
    std::vector<std::int64_t> grp, fail_grp;
    for (auto i : idx) {
      if (results[i].ok()) {
        imgs.push_back(results[i].x_star);
        grp.push_back(0);
      } else {
        fail_grp.push_back(0);
      }
    }
    auto targets = torch::full({static_cast<std::int64_t>(imgs.size())}, cls, torch::kInt64);
    auto b = evaluate_block(eval_model, stack(imgs), targets, config.eval_labels, grp, fail_grp, private_set);
    rep.per_class.push_back({cls, b.top1, b.top5, b.knn_dist, b.n_success, b.n_total});
    class_top1.push_back(b.top1);
  }
  rep.top1_std_across_classes = population_std(class_top1);
  return rep;
}

nlohmann::json to_json(const EvaluationReport& report) {
  nlohmann::json j;
  j["selected"] = block_json(report.selected);
  j["all_restarts"] = report.all_restarts ? block_json(*report.all_restarts) : nlohmann::json(nullptr);
  j["std_definition"] = "population std of attack accuracy across seed groups";
  j["top1_std_across_classes"] = report.top1_std_across_classes;
  auto per = nlohmann::json::array();
  for (const auto& c : report.per_class) {
    per.push_back({{"class", c.target_class}, {"attack_acc_top1", c.top1}, {"attack_acc_top5", c.top5},
                   {"knn_dist", opt(c.knn_dist)}, {"n_success", c.n_success}, {"n_total", c.n_total}});
  }
  j["per_class"] = per;
  j["config"] = report.echo;
  return j;
}

std::string format_table(const EvaluationReport& report) {
  std::ostringstream s;
  auto row = [&](const std::string& name, const MetricBlock& b) {
    s << std::left << std::setw(14) << name << std::setw(20) << acc(b.top1, b.top1_std) << std::setw(20)
      << acc(b.top5, b.top5_std) << std::setw(12) << fmt(b.knn_dist, 2) << std::setw(12) << fmt(b.fid, 2)
      << b.n_success << "/" << b.n_total << "\n";
  };
  s << std::left << std::setw(14) << "Mode" << std::setw(20) << "Attack Acc (up)" << std::setw(20) << "Top-5 (up)"
    << std::setw(12) << "KNN (down)" << std::setw(12) << "FID (down)" << "Success\n";
  row("selected", report.selected);
  if (report.all_restarts) row("all-restarts", *report.all_restarts);
  s << "\nper class\n";
  for (const auto& c : report.per_class) {
    s << "  class " << c.target_class << ": top1 " << std::fixed << std::setprecision(4) << c.top1 << ", top5 "
      << c.top5 << ", knn " << fmt(c.knn_dist, 2) << " (" << c.n_success << "/" << c.n_total << ")\n";
  }
  return s.str();
}

void write_report(const EvaluationReport& report, const std::filesystem::path& json_path,
                  const std::filesystem::path& table_path) {
  for (const auto& p : {json_path, table_path}) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  }
  std::ofstream j(json_path);
  if (!j) fail(ErrorKind::kIo, "cannot write " + json_path.string());
  j << std::setw(2) << to_json(report) << "\n";
  std::ofstream t(table_path);
  if (!t) fail(ErrorKind::kIo, "cannot write " + table_path.string());
  t << format_table(report);
}

}  // namespace plgmi::eval
