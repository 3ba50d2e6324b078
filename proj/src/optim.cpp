#include "spcl/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spcl {

AdamWState AdamWState::zeros(std::size_t size, AdamWConfig config) {
  return AdamWState{std::vector<double>(size, 0.0), std::vector<double>(size, 0.0), 0, config};
}

void adamw_masked_step(std::span<double> theta, std::span<const double> grad, const Bitmask& mask,
                       AdamWState& state, double lr) {
  const std::size_t n = theta.size();
  if (grad.size() != n || mask.size() != n || state.m.size() != n || state.v.size() != n) {
    fail(ErrorCode::kDimension, "adamw_masked_step: theta/grad/mask/state sizes differ");
  }
  if (!(lr >= 0.0)) fail(ErrorCode::kArgument, "adamw_masked_step: lr must be >= 0");

  const AdamWConfig& c = state.config;
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  const auto bits = mask.raw();
  for (std::size_t i = 0; i < n; ++i) {
    if (!bits[i]) continue;
    const double g = grad[i];
    double p = theta[i];
    p *= 1.0 - lr * c.weight_decay;
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    p -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    theta[i] = p;
  }
}

LrSchedule LrSchedule::with_default_warmup(double base_lr, std::size_t total_steps,
                                           double warmup_fraction) {
  const auto warmup =
      static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(total_steps)));
  return LrSchedule{base_lr, std::min(warmup, total_steps), total_steps, 0.0};
}

double cosine_warmup_lr(std::size_t step, const LrSchedule& s) {
  if (s.warmup_steps > s.total_steps) {
    fail(ErrorCode::kArgument, "cosine_warmup_lr: warmup_steps exceeds total_steps");
  }
  if (step > s.total_steps) {
    fail(ErrorCode::kScheduleExhausted, "cosine_warmup_lr: step " + std::to_string(step) +
                                            " beyond total " + std::to_string(s.total_steps));
  }
  const double floor_lr = std::min(s.min_lr, s.base_lr);
  if (step < s.warmup_steps) {
    // Ramp starts at floor_lr, which is 0 for the default schedule.
    const double frac = static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    return floor_lr + (s.base_lr - floor_lr) * frac;
  }
  if (s.total_steps == s.warmup_steps) return s.base_lr;
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return floor_lr + 0.5 * (s.base_lr - floor_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

Tensor2 finite_difference_gradient(const ScalarLoss& loss, const Tensor2& theta, double eps) {
  if (!(eps > 0.0)) fail(ErrorCode::kArgument, "finite_difference_gradient: eps must be > 0");
  Tensor2 probe = theta;
  Tensor2 grad(theta.rows(), theta.cols());
  auto p = probe.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double up = loss(probe);
    p[i] = orig - eps;
    const double down = loss(probe);
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      fail(ErrorCode::kNumeric, "finite_difference_gradient: non-finite loss at entry " +
                                    std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor) {
  if (analytic.size() != numeric.size()) {
    fail(ErrorCode::kDimension, "max_relative_error: length mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double b = numeric[i];
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    worst = std::max(worst, std::abs(a - b) / denom);
  }
  return worst;
}

}  // namespace spcl
