#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace plgmi::inversion {

enum class InversionLoss { kCrossEntropy, kMaxMargin, kPoincare };

std::string_view to_string(InversionLoss loss);
// Accepts "ce"/"cross_entropy", "mm"/"max_margin", "poincare".
InversionLoss parse_inversion_loss(std::string_view text);

struct LossWithGradient {
  double value = 0.0;
  std::vector<double> gradient;  // d loss / d logits
};

// -log softmax(o)_c, evaluated with log-sum-exp; gradient p - y_c.
LossWithGradient cross_entropy_loss(std::span<const double> logits, std::int64_t target);

// Largest logit other than the target; lowest index on ties.
std::int64_t runner_up(std::span<const double> logits, std::int64_t target);
bool runner_up_is_unique(std::span<const double> logits, std::int64_t target);

// -o_c + max_{j != c} o_j; gradient y_j - y_c with j = runner_up(o, c).
LossWithGradient max_margin_loss(std::span<const double> logits, std::int64_t target);

inline constexpr double kPoincareXi = 1e-5;
// Lower bound applied to (1 - ||u||^2) and (1 - ||v||^2).
inline constexpr double kPoincareBoundaryGap = 1e-6;

struct PoincareValue {
  double value = 0.0;
  bool clamped = false;  // a denominator hit kPoincareBoundaryGap
};

// Hyperbolic distance between u = o / ||o||_1 and v = max(onehot(c) - xi, 0).
PoincareValue poincare_loss(std::span<const double> logits, std::int64_t target, double xi = kPoincareXi);

// Differentiable per-row losses for N x K logits and int64 targets (N).
torch::Tensor inversion_loss(InversionLoss kind, const torch::Tensor& logits, const torch::Tensor& targets,
                             double xi = kPoincareXi);

}  // namespace plgmi::inversion
