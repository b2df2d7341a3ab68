#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "plgmi/error.hpp"
#include "plgmi/inversion/losses.hpp"

namespace plgmi::inversion {

// What one stage-2 iteration exposes to the trend recorder: the logits it
// scored (rows = latent x view), their targets, the gradient of the summed
// objective with respect to those logits, and the per-row losses.
struct StepObservation {
  torch::Tensor logits;
  torch::Tensor logit_grad;
  torch::Tensor targets;
  torch::Tensor losses;
  std::optional<double> latent_grad_l1;
};

using StageTwoStep = std::function<StepObservation(std::int64_t iteration)>;

struct TrendRecord {
  std::int64_t iteration = 0;
  double grad_l1 = 0.0;       // mean over rows of ||dL/do||_1
  double loss = 0.0;          // mean over rows
  double target_logit = 0.0;  // mean over rows
  double target_prob = 0.0;   // mean softmax probability of the target
  double latent_grad_l1 = std::numeric_limits<double>::quiet_NaN();
  std::int64_t unique_runner_up_rows = 0;
  // Largest per-row |  ||dL/do||_1 - analytic norm |: 2(1 - p_c) for CE,
  // 2 for max-margin rows with a unique runner-up. NaN for Poincare.
  double analytic_deviation = std::numeric_limits<double>::quiet_NaN();
};

struct LossTrace {
  InversionLoss loss = InversionLoss::kMaxMargin;
  std::vector<TrendRecord> records;

  // g_i / ||g_0||_1 and L_i / L_0; the first entries are exactly 1.
  std::vector<double> grad_rescaled() const;
  std::vector<double> loss_rescaled() const;
};

class TraceAborted : public Error {
 public:
  TraceAborted(const std::string& message, LossTrace partial)
      : Error(ErrorKind::kNumerical, message), partial_(std::move(partial)) {}
  const LossTrace& partial() const { return partial_; }

 private:
  LossTrace partial_;
};

TrendRecord summarize_step(InversionLoss loss, std::int64_t iteration, const StepObservation& obs);

// Runs `iterations` steps and records one TrendRecord per step. Throws
// TraceAborted (carrying the records so far) on a non-finite entry.
LossTrace record_trend(InversionLoss loss, const StageTwoStep& step, std::int64_t iterations);

// Columns: iter, grad_rescaled, loss_rescaled, target_logit.
void write_trace_csv(const LossTrace& trace, const std::filesystem::path& path);
// All raw per-iteration fields.
void write_raw_trace_csv(const LossTrace& trace, const std::filesystem::path& path);

}  // namespace plgmi::inversion
