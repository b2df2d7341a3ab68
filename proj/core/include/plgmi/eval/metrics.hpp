#pragma once

#include <torch/torch.h>

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "plgmi/models/classifier.hpp"

namespace plgmi::eval {

// Per-image flag: target class within the model's top-k prediction.
torch::Tensor topk_hits(const models::Classifier& model, const torch::Tensor& images, const torch::Tensor& targets,
                        std::int64_t k);
double attack_accuracy(const models::Classifier& model, const torch::Tensor& images, const torch::Tensor& targets,
                       std::int64_t k);

// Per-row min l2 distance from queries (N x d) to references (M x d).
torch::Tensor nearest_distances(const torch::Tensor& queries, const torch::Tensor& references);
// Mean over reconstructions of the smallest penultimate-feature distance to
// any private image.
double knn_distance(const models::Classifier& model, const torch::Tensor& recons, const torch::Tensor& private_images);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // unbiased
  std::int64_t count = 0;
};
Moments feature_moments(const torch::Tensor& features);

inline constexpr double kEigenFloor = 1e-10;

struct FidResult {
  double value = 0.0;
  std::vector<std::string> warnings;
};

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
FidResult frechet_distance(const Moments& a, const Moments& b);
// Features given directly as N x d tensors.
FidResult compute_fid(const torch::Tensor& features_a, const torch::Tensor& features_b);
// Images passed through the extractor's penultimate layer.
FidResult compute_fid(const models::Classifier& extractor, const torch::Tensor& images_a,
                      const torch::Tensor& images_b);

}  // namespace plgmi::eval
