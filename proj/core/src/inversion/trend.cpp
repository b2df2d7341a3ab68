#include "plgmi/inversion/trend.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace plgmi::inversion {

std::vector<double> LossTrace::grad_rescaled() const {
  std::vector<double> out;
  if (records.empty()) return out;
  const double g0 = records.front().grad_l1;
  for (const auto& r : records) out.push_back(r.grad_l1 / g0);
  return out;
}

std::vector<double> LossTrace::loss_rescaled() const {
  std::vector<double> out;
  if (records.empty()) return out;
  const double l0 = records.front().loss;
  for (const auto& r : records) out.push_back(r.loss / l0);
  return out;
}

TrendRecord summarize_step(InversionLoss loss, std::int64_t iteration, const StepObservation& obs) {
  torch::NoGradGuard guard;
  auto logits = obs.logits.detach().to(torch::kFloat64);
  auto grad = obs.logit_grad.detach().to(torch::kFloat64);
  auto t = obs.targets.to(torch::kInt64).unsqueeze(1);
  const auto rows = logits.size(0);
  require(rows > 0 && grad.sizes() == logits.sizes(), ErrorKind::kInvalidArgument,
          "trend step must report matching logits and logit gradients");

  TrendRecord r;
  r.iteration = iteration;
  auto row_l1 = grad.abs().sum(1);
  auto p_c = torch::softmax(logits, 1).gather(1, t).squeeze(1);
  r.grad_l1 = row_l1.mean().item<double>();
  r.loss = obs.losses.detach().to(torch::kFloat64).mean().item<double>();
  r.target_logit = logits.gather(1, t).mean().item<double>();
  r.target_prob = p_c.mean().item<double>();
  if (obs.latent_grad_l1) r.latent_grad_l1 = *obs.latent_grad_l1;

  auto masked = logits.scatter(1, t, -std::numeric_limits<double>::infinity());
  auto top2 = std::get<0>(masked.topk(std::min<std::int64_t>(2, logits.size(1)), 1));
  auto unique = logits.size(1) <= 2 ? torch::ones({rows}, torch::kBool) : top2.select(1, 0).gt(top2.select(1, 1));
  r.unique_runner_up_rows = unique.sum().item<std::int64_t>();

  if (loss == InversionLoss::kCrossEntropy) {
    r.analytic_deviation = (row_l1 - 2.0 * (1.0 - p_c)).abs().max().item<double>();
  } else if (loss == InversionLoss::kMaxMargin) {
    auto dev = (row_l1 - 2.0).abs().masked_select(unique);
    r.analytic_deviation = dev.numel() > 0 ? dev.max().item<double>() : 0.0;
  }
  return r;
}

LossTrace record_trend(InversionLoss loss, const StageTwoStep& step, std::int64_t iterations) {
  require(iterations >= 1, ErrorKind::kInvalidArgument, "trend recording needs at least one iteration");
  LossTrace trace;
  trace.loss = loss;
  for (std::int64_t i = 0; i < iterations; ++i) {
    auto rec = summarize_step(loss, i, step(i));
    const bool finite = std::isfinite(rec.grad_l1) && std::isfinite(rec.loss) && std::isfinite(rec.target_logit);
    if (!finite) throw TraceAborted("non-finite trace entry at iteration " + std::to_string(i), trace);
    trace.records.push_back(rec);
    if (trace.records.size() == 1 && (rec.grad_l1 == 0.0 || rec.loss == 0.0)) {
      throw TraceAborted("first-iteration gradient or loss is zero; rescaled trace undefined", trace);
    }
  }
  return trace;
}

void write_trace_csv(const LossTrace& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "iter,grad_rescaled,loss_rescaled,target_logit\n" << std::setprecision(10);
  const auto g = trace.grad_rescaled();
  const auto l = trace.loss_rescaled();
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    out << trace.records[i].iteration << "," << g[i] << "," << l[i] << "," << trace.records[i].target_logit << "\n";
  }
}

void write_raw_trace_csv(const LossTrace& trace, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "iter,grad_l1,loss,target_logit,target_prob,latent_grad_l1,unique_runner_up_rows,analytic_deviation\n"
      << std::setprecision(12);
  for (const auto& r : trace.records) {
    out << r.iteration << "," << r.grad_l1 << "," << r.loss << "," << r.target_logit << "," << r.target_prob << ","
        << r.latent_grad_l1 << "," << r.unique_runner_up_rows << "," << r.analytic_deviation << "\n";
  }
}

}  // namespace plgmi::inversion
