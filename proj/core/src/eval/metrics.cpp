#include "plgmi/eval/metrics.hpp"

#include <cmath>

#include "plgmi/error.hpp"

namespace plgmi::eval {
namespace {

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto d = t.to(torch::kFloat64).contiguous();
  Eigen::MatrixXd m(d.size(0), d.size(1));
  // torch is row-major, Eigen defaults to column-major.
  auto acc = d.accessor<double, 2>();
  for (std::int64_t i = 0; i < d.size(0); ++i) {
    for (std::int64_t j = 0; j < d.size(1); ++j) m(i, j) = acc[i][j];
  }
  return m;
}

torch::Tensor features_of(const models::Classifier& model, const torch::Tensor& images) {
  return model.penultimate_features(data::ImageBatch{images, std::nullopt});
}

}  // namespace

torch::Tensor topk_hits(const models::Classifier& model, const torch::Tensor& images, const torch::Tensor& targets,
                        std::int64_t k) {
  require(images.size(0) > 0, ErrorKind::kInvalidArgument, "attack accuracy of an empty batch is undefined");
  require(targets.dim() == 1 && targets.size(0) == images.size(0), ErrorKind::kInvalidArgument,
          "one target per reconstruction is required");
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be >= 1");
  auto logits = model.predict_logits(data::ImageBatch{images, std::nullopt});
  const auto kk = std::min<std::int64_t>(k, logits.size(1));
  auto top = std::get<1>(logits.topk(kk, 1));
  return top.eq(targets.view({-1, 1})).any(1);
}

double attack_accuracy(const models::Classifier& model, const torch::Tensor& images, const torch::Tensor& targets,
                       std::int64_t k) {
  return topk_hits(model, images, targets, k).to(torch::kFloat64).mean().item<double>();
}

torch::Tensor nearest_distances(const torch::Tensor& queries, const torch::Tensor& references) {
  require(references.size(0) > 0, ErrorKind::kInvalidArgument, "KNN distance needs a non-empty private set");
  require(queries.size(1) == references.size(1), ErrorKind::kInvalidArgument, "feature dimensions differ");
  auto q = queries.to(torch::kFloat64), r = references.to(torch::kFloat64);
  return std::get<0>(torch::cdist(q, r).min(1));
}

double knn_distance(const models::Classifier& model, const torch::Tensor& recons, const torch::Tensor& private_images) {
  require(private_images.size(0) > 0, ErrorKind::kInvalidArgument, "KNN distance needs a non-empty private set");
  require(recons.size(0) > 0, ErrorKind::kInvalidArgument, "KNN distance needs at least one reconstruction");
  return nearest_distances(features_of(model, recons), features_of(model, private_images)).mean().item<double>();
}

Moments feature_moments(const torch::Tensor& features) {
  require(features.dim() == 2 && features.size(0) >= 2, ErrorKind::kInvalidArgument,
          "feature moments need an N x d matrix with N >= 2");
  auto x = to_eigen(features);
  Moments m;
  m.count = x.rows();
  m.mean = x.colwise().mean().transpose();
  auto centered = x.rowwise() - m.mean.transpose();
  m.covariance = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
  return m;
}

FidResult frechet_distance(const Moments& a, const Moments& b) {
  require(a.mean.size() == b.mean.size(), ErrorKind::kInvalidArgument, "feature dimensions differ");
  FidResult out;
  const auto d = a.mean.size();
  for (const auto* m : {&a, &b}) {
    if (m->count < 2 * d) {
      out.warnings.push_back("small sample: " + std::to_string(m->count) + " features for dimension " +
                             std::to_string(d) + " (want >= " + std::to_string(2 * d) + ")");
    }
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(0.5 * (a.covariance + a.covariance.transpose()));
  auto la = ea.eigenvalues();
  std::int64_t clamped = 0;
  for (Eigen::Index i = 0; i < la.size(); ++i) {
    if (la(i) < kEigenFloor) {
      la(i) = kEigenFloor;
      ++clamped;
    }
  }
  const Eigen::MatrixXd root_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd inner = root_a * b.covariance * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  double trace_root = 0.0;
  for (Eigen::Index i = 0; i < ei.eigenvalues().size(); ++i) {
    const double v = ei.eigenvalues()(i);
    if (v < -kEigenFloor) ++clamped;
    trace_root += std::sqrt(std::max(v, 0.0));
  }
  if (clamped > 0) {
    out.warnings.push_back("degenerate covariance: " + std::to_string(clamped) + " eigenvalues clamped at 1e-10");
  }
  out.value = (a.mean - b.mean).squaredNorm() + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_root;
  require(std::isfinite(out.value), ErrorKind::kNumerical, "FID is not finite");
  return out;
}

FidResult compute_fid(const torch::Tensor& features_a, const torch::Tensor& features_b) {
  return frechet_distance(feature_moments(features_a), feature_moments(features_b));
}

FidResult compute_fid(const models::Classifier& extractor, const torch::Tensor& images_a,
                      const torch::Tensor& images_b) {
  return compute_fid(features_of(extractor, images_a), features_of(extractor, images_b));
}

}  // namespace plgmi::eval
