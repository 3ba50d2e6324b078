#pragma once

#include <span>
#include <vector>

#include "spcl/model.hpp"
#include "spcl/tensor.hpp"

namespace spcl {

inline constexpr double kDefaultMasAlpha = 0.5;
inline constexpr double kDefaultMasLambda = 0.05;

// Omega and the anchor cover the full flat parameter space; only eligible
// entries of omega are ever nonzero.
struct MasState {
  std::vector<double> omega;
  std::vector<double> anchor;
  double alpha = kDefaultMasAlpha;
  double lambda = kDefaultMasLambda;

  static MasState zeros(std::size_t param_count, double alpha = kDefaultMasAlpha,
                        double lambda = kDefaultMasLambda);
  void snapshot(std::span<const double> theta) { anchor.assign(theta.begin(), theta.end()); }
};

// Mean absolute gradient of the squared pre-normalization output norm.
// Input-tower entries average over the rows of `inputs`; class-tower entries
// average over `class_ids`. Entries outside `eligible` stay zero.
std::vector<double> compute_raw_importance(const Model& model, const Tensor2& inputs,
                                           std::span<const std::size_t> class_ids,
                                           std::span<const std::size_t> eligible);

/// raw / max(raw) (unchanged when max is 0), then (1 - alpha) * prev + alpha * normalized.
std::vector<double> update_importance(std::span<const double> omega_prev,
                                      std::span<const double> raw, double alpha);

// lambda * sum over masked-in i of omega_i (theta_i - anchor_i)^2. The matching
// gradient 2 lambda omega_i (theta_i - anchor_i) is added into grad when given.
double penalty_and_grad(std::span<const double> theta, const MasState& mas, const Bitmask& mask,
                        std::span<double> grad = {});

}  // namespace spcl
