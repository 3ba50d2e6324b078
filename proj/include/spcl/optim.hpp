#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "spcl/tensor.hpp"

namespace spcl {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step_count = 0;
  AdamWConfig config;

  static AdamWState zeros(std::size_t size, AdamWConfig config = {});
};

// Decoupled-weight-decay AdamW on the masked-in entries only. Masked-out
// entries of theta, m and v are left untouched, weight decay included.
// step_count advances once per call.
void adamw_masked_step(std::span<double> theta, std::span<const double> grad, const Bitmask& mask,
                       AdamWState& state, double lr);

struct LrSchedule {
  double base_lr = 7.5e-6;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;
  double min_lr = 0.0;

  /// Warmup of 10% of total steps, rounded down.
  static LrSchedule with_default_warmup(double base_lr, std::size_t total_steps,
                                        double warmup_fraction = 0.1);
};

double cosine_warmup_lr(std::size_t step, const LrSchedule& schedule);

// Central differences of a scalar loss with respect to every entry of theta.
using ScalarLoss = std::function<double(const Tensor2&)>;
Tensor2 finite_difference_gradient(const ScalarLoss& loss, const Tensor2& theta, double eps = 1e-5);

/// |a - b| / max(|a|, |b|, floor), maximised over entries.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                          double floor = 1e-6);

}  // namespace spcl
