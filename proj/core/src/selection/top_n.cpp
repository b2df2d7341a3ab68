#include "plgmi/selection/top_n.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>

#include "plgmi/error.hpp"

namespace plgmi::selection {

std::string_view to_string(ScoreKind kind) { return kind == ScoreKind::kLogit ? "logit" : "probability"; }

ScoreKind parse_score_kind(std::string_view text) {
  if (text == "probability") return ScoreKind::kProbability;
  if (text == "logit") return ScoreKind::kLogit;
  fail(ErrorKind::kInvalidArgument, "unknown score kind '" + std::string(text) + "' (expected probability|logit)");
}

PseudoLabeledDataset select_top_n(const torch::Tensor& scores, std::int64_t n, ScoreKind kind) {
  require(scores.dim() == 2, ErrorKind::kInvalidArgument, "score matrix must be N x K");
  const auto pool = scores.size(0), k_classes = scores.size(1);
  require(n >= 1, ErrorKind::kInvalidArgument, "n must be positive");
  require(n <= pool, ErrorKind::kInvalidArgument,
          "n = " + std::to_string(n) + " exceeds public pool size " + std::to_string(pool));
  auto s = scores.to(torch::kFloat64).contiguous();
  require(torch::isfinite(s).all().item<bool>(), ErrorKind::kNumerical, "non-finite selection scores");
  const auto* data = s.data_ptr<double>();

  PseudoLabeledDataset dr;
  dr.n = n;
  dr.score_kind = kind;
  dr.per_class.resize(static_cast<std::size_t>(k_classes));
  std::vector<std::int64_t> order(static_cast<std::size_t>(pool));
  for (std::int64_t k = 0; k < k_classes; ++k) {
    std::iota(order.begin(), order.end(), 0);
    auto score = [&](std::int64_t i) { return data[i * k_classes + k]; };
    // (score desc, index asc) is a strict total order, so the partial sort is
    // equivalent to a stable descending sort truncated at n.
    std::partial_sort(order.begin(), order.begin() + n, order.end(), [&](std::int64_t a, std::int64_t b) {
      const double sa = score(a), sb = score(b);
      return sa > sb || (sa == sb && a < b);
    });
    auto& out = dr.per_class[static_cast<std::size_t>(k)];
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r) out.push_back({order[r], score(order[r])});
  }
  return dr;
}

torch::Tensor score_public_pool(const data::ImageBatch& public_pool, const models::Classifier& target,
                                ScoreKind kind) {
  return kind == ScoreKind::kLogit ? target.predict_logits(public_pool) : target.predict_probs(public_pool);
}

PseudoLabeledDataset assign_pseudo_labels(const data::ImageBatch& public_pool, const models::Classifier& target,
                                          std::int64_t n, std::int64_t num_classes, ScoreKind kind) {
  require(target.num_classes() == num_classes, ErrorKind::kInvalidArgument,
          "target outputs " + std::to_string(target.num_classes()) + " classes, expected " +
              std::to_string(num_classes));
  require(n <= public_pool.size(), ErrorKind::kInvalidArgument,
          "n = " + std::to_string(n) + " exceeds public pool size " + std::to_string(public_pool.size()));
  return select_top_n(score_public_pool(public_pool, target, kind), n, kind);
}

SelectionSummary selection_summary(const PseudoLabeledDataset& dr) {
  SelectionSummary s;
  std::map<std::int64_t, std::int64_t> multiplicity;
  for (const auto& cls : dr.per_class) {
    double sum = 0.0, lo = std::numeric_limits<double>::infinity();
    for (const auto& e : cls) {
      sum += e.score;
      lo = std::min(lo, e.score);
      ++multiplicity[e.index];
    }
    s.mean_score.push_back(cls.empty() ? 0.0 : sum / static_cast<double>(cls.size()));
    s.min_score.push_back(cls.empty() ? 0.0 : lo);
  }
  s.unique_images = static_cast<std::int64_t>(multiplicity.size());
  for (const auto& [index, count] : multiplicity) s.duplicate_count += std::max<std::int64_t>(0, count - 1);
  return s;
}

data::ImageBatch materialize(const PseudoLabeledDataset& dr, const data::ImageBatch& public_pool) {
  std::vector<std::int64_t> indices, labels;
  for (std::size_t k = 0; k < dr.per_class.size(); ++k) {
    for (const auto& e : dr.per_class[k]) {
      require(e.index >= 0 && e.index < public_pool.size(), ErrorKind::kData, "selection index outside public pool");
      indices.push_back(e.index);
      labels.push_back(static_cast<std::int64_t>(k));
    }
  }
  data::ImageBatch out{public_pool.values.index_select(0, torch::tensor(indices, torch::kInt64)), std::nullopt};
  out.labels = torch::tensor(labels, torch::kInt64);
  return out;
}

void save_selection(const PseudoLabeledDataset& dr, const std::filesystem::path& path) {
  nlohmann::json j;
  j["n"] = dr.n;
  j["num_classes"] = dr.num_classes();
  j["score_kind"] = std::string(to_string(dr.score_kind));
  auto& classes = j["classes"] = nlohmann::json::array();
  for (std::size_t k = 0; k < dr.per_class.size(); ++k) {
    std::vector<std::int64_t> idx;
    std::vector<double> scores;
    for (const auto& e : dr.per_class[k]) {
      idx.push_back(e.index);
      scores.push_back(e.score);
    }
    classes.push_back({{"pseudo_label", k}, {"indices", idx}, {"scores", scores}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << std::setprecision(17) << j.dump() << "\n";
}

PseudoLabeledDataset load_selection(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kDependency, "missing selection file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    PseudoLabeledDataset dr;
    dr.n = j.at("n").get<std::int64_t>();
    dr.score_kind = parse_score_kind(j.at("score_kind").get<std::string>());
    for (const auto& c : j.at("classes")) {
      auto idx = c.at("indices").get<std::vector<std::int64_t>>();
      auto scores = c.at("scores").get<std::vector<double>>();
      require(idx.size() == scores.size() && static_cast<std::int64_t>(idx.size()) == dr.n, ErrorKind::kIo,
              "selection class list length differs from n");
      std::vector<SelectedImage> list;
      for (std::size_t i = 0; i < idx.size(); ++i) list.push_back({idx[i], scores[i]});
      dr.per_class.push_back(std::move(list));
    }
    return dr;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kIo, "corrupt selection file " + path.string() + ": " + e.what());
  }
}

}  // namespace plgmi::selection
