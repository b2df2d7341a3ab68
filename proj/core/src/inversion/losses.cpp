#include "plgmi/inversion/losses.hpp"

#include <algorithm>
#include <cmath>

#include "plgmi/error.hpp"

namespace plgmi::inversion {
namespace {

void check_target(std::span<const double> logits, std::int64_t target) {
  require(!logits.empty(), ErrorKind::kInvalidArgument, "empty logit vector");
  require(target >= 0 && target < static_cast<std::int64_t>(logits.size()), ErrorKind::kInvalidArgument,
          "target class " + std::to_string(target) + " out of range");
}

}  // namespace

std::string_view to_string(InversionLoss loss) {
  switch (loss) {
    case InversionLoss::kCrossEntropy:
      return "ce";
    case InversionLoss::kMaxMargin:
      return "max_margin";
    case InversionLoss::kPoincare:
      return "poincare";
  }
  return "unknown";
}

InversionLoss parse_inversion_loss(std::string_view text) {
  if (text == "ce" || text == "cross_entropy") return InversionLoss::kCrossEntropy;
  if (text == "mm" || text == "max_margin") return InversionLoss::kMaxMargin;
  if (text == "poincare") return InversionLoss::kPoincare;
  fail(ErrorKind::kInvalidArgument, "unknown inversion loss '" + std::string(text) + "'");
}

LossWithGradient cross_entropy_loss(std::span<const double> logits, std::int64_t target) {
  check_target(logits, target);
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double o : logits) sum += std::exp(o - peak);
  const double log_z = peak + std::log(sum);
  LossWithGradient out;
  out.value = log_z - logits[static_cast<std::size_t>(target)];
  out.gradient.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out.gradient[i] = std::exp(logits[i] - log_z);
  out.gradient[static_cast<std::size_t>(target)] -= 1.0;
  return out;
}

std::int64_t runner_up(std::span<const double> logits, std::int64_t target) {
  check_target(logits, target);
  require(logits.size() >= 2, ErrorKind::kInvalidArgument, "max-margin loss needs at least 2 classes");
  std::int64_t best = -1;
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(logits.size()); ++j) {
    if (j == target) continue;
    if (best < 0 || logits[j] > logits[best]) best = j;
  }
  return best;
}

bool runner_up_is_unique(std::span<const double> logits, std::int64_t target) {
  const auto j = runner_up(logits, target);
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(logits.size()); ++i) {
    if (i != target && i != j && logits[i] == logits[j]) return false;
  }
  return true;
}

LossWithGradient max_margin_loss(std::span<const double> logits, std::int64_t target) {
  const auto j = runner_up(logits, target);
  LossWithGradient out;
  out.value = logits[j] - logits[target];
  out.gradient.assign(logits.size(), 0.0);
  out.gradient[j] = 1.0;
  out.gradient[target] = -1.0;
  return out;
}

PoincareValue poincare_loss(std::span<const double> logits, std::int64_t target, double xi) {
  check_target(logits, target);
  require(xi >= 0.0, ErrorKind::kInvalidArgument, "poincare xi must be non-negative");
  double l1 = 0.0;
  for (double o : logits) l1 += std::abs(o);
  require(l1 > 0.0, ErrorKind::kInvalidArgument, "poincare loss needs a non-zero logit vector");

  double uu = 0.0, vv = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double u = logits[i] / l1;
    const double v = std::max((static_cast<std::int64_t>(i) == target ? 1.0 : 0.0) - xi, 0.0);
    uu += u * u;
    vv += v * v;
    diff += (u - v) * (u - v);
  }
  PoincareValue out;
  double gap_u = 1.0 - uu, gap_v = 1.0 - vv;
  if (gap_u < kPoincareBoundaryGap) {
    gap_u = kPoincareBoundaryGap;
    out.clamped = true;
  }
  if (gap_v < kPoincareBoundaryGap) {
    gap_v = kPoincareBoundaryGap;
    out.clamped = true;
  }
  out.value = std::acosh(1.0 + 2.0 * diff / (gap_u * gap_v));
  return out;
}

torch::Tensor inversion_loss(InversionLoss kind, const torch::Tensor& logits, const torch::Tensor& targets, double xi) {
  require(logits.dim() == 2, ErrorKind::kInvalidArgument, "logits must be N x K");
  require(targets.dim() == 1 && targets.size(0) == logits.size(0), ErrorKind::kInvalidArgument,
          "targets must have one entry per logit row");
  const auto k = logits.size(1);
  if (targets.numel() > 0) {
    require(targets.min().item<std::int64_t>() >= 0 && targets.max().item<std::int64_t>() < k,
            ErrorKind::kInvalidArgument, "target class out of range");
  }
  auto t = targets.to(torch::kInt64).unsqueeze(1);
  switch (kind) {
    case InversionLoss::kCrossEntropy:
      return -torch::log_softmax(logits, 1).gather(1, t).squeeze(1);
    case InversionLoss::kMaxMargin: {
      require(k >= 2, ErrorKind::kInvalidArgument, "max-margin loss needs at least 2 classes");
      torch::Tensor j;
      {
        torch::NoGradGuard guard;
        auto masked = logits.detach().scatter(1, t, -std::numeric_limits<double>::infinity());
        j = masked.argmax(1, /*keepdim=*/true);  // first maximum on ties
      }
      return (logits.gather(1, j) - logits.gather(1, t)).squeeze(1);
    }
    case InversionLoss::kPoincare: {
      auto u = logits / logits.abs().sum(1, true).clamp_min(1e-12);
      auto v = (torch::zeros_like(logits).scatter(1, t, 1.0) - xi).clamp_min(0.0);
      auto gap_u = (1.0 - u.square().sum(1)).clamp_min(kPoincareBoundaryGap);
      auto gap_v = (1.0 - v.square().sum(1)).clamp_min(kPoincareBoundaryGap);
      auto delta = 2.0 * (u - v).square().sum(1) / (gap_u * gap_v);
      return torch::acosh(1.0 + delta);
    }
  }
  fail(ErrorKind::kInvalidArgument, "unknown inversion loss");
}

}  // namespace plgmi::inversion
