#include "spcl/mas.hpp"

#include <algorithm>
#include <cmath>

namespace spcl {

MasState MasState::zeros(std::size_t param_count, double alpha, double lambda) {
  return MasState{std::vector<double>(param_count, 0.0), std::vector<double>(param_count, 0.0),
                  alpha, lambda};
}

namespace {

// Adds |d ||pre_norm_row||^2 / d theta| for each row into acc, one row at a time.
template <typename Encode>
void accumulate_output_norm_gradients(const Model& model, std::size_t count, Encode encode,
                                      std::span<const std::size_t> eligible,
                                      std::vector<double>& acc) {
  std::vector<double> grad(model.param_count());
  for (std::size_t k = 0; k < count; ++k) {
    std::fill(grad.begin(), grad.end(), 0.0);
    TowerPass pass = encode(k);
    Tensor2 d_pre = pass.pre_norm;
    for (double& v : d_pre.values()) v *= 2.0;
    tower_backward_pre_norm(model, pass, d_pre, grad);
    for (std::size_t i : eligible) acc[i] += std::abs(grad[i]);
  }
}

}  // namespace

std::vector<double> compute_raw_importance(const Model& model, const Tensor2& inputs,
                                           std::span<const std::size_t> class_ids,
                                           std::span<const std::size_t> eligible) {
  if (inputs.rows() == 0 && class_ids.empty()) {
    fail(ErrorCode::kArgument, "compute_raw_importance: empty data");
  }
  const auto& reg = model.registry();
  std::vector<std::size_t> input_idx;
  std::vector<std::size_t> class_idx;
  for (std::size_t i : eligible) {
    (reg.at(reg.entry_of(i)).tower == Tower::kInput ? input_idx : class_idx).push_back(i);
  }

  std::vector<double> raw(model.param_count(), 0.0);
  if (inputs.rows() > 0) {
    std::vector<double> acc(model.param_count(), 0.0);
    accumulate_output_norm_gradients(
        model, inputs.rows(),
        [&](std::size_t k) {
          return encode_input(model, Tensor2::row_vector(inputs.row(k)), false);
        },
        input_idx, acc);
    const double inv = 1.0 / static_cast<double>(inputs.rows());
    for (std::size_t i : input_idx) raw[i] = acc[i] * inv;
  }
  if (!class_ids.empty()) {
    std::vector<double> acc(model.param_count(), 0.0);
    accumulate_output_norm_gradients(
        model, class_ids.size(),
        [&](std::size_t k) { return encode_classes(model, class_ids.subspan(k, 1), false); },
        class_idx, acc);
    const double inv = 1.0 / static_cast<double>(class_ids.size());
    for (std::size_t i : class_idx) raw[i] = acc[i] * inv;
  }
  return raw;
}

std::vector<double> update_importance(std::span<const double> omega_prev,
                                      std::span<const double> raw, double alpha) {
  if (omega_prev.size() != raw.size()) {
    fail(ErrorCode::kDimension, "update_importance: omega and raw lengths differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    fail(ErrorCode::kArgument, "update_importance: alpha must lie in [0, 1]");
  }
  double max_raw = 0.0;
  for (double r : raw) {
    if (!(r >= 0.0)) fail(ErrorCode::kArgument, "update_importance: raw importance must be >= 0");
    max_raw = std::max(max_raw, r);
  }
  const double scale = max_raw > 0.0 ? 1.0 / max_raw : 1.0;
  std::vector<double> omega(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    omega[i] = (1.0 - alpha) * omega_prev[i] + alpha * (raw[i] * scale);
  }
  return omega;
}

double penalty_and_grad(std::span<const double> theta, const MasState& mas, const Bitmask& mask,
                        std::span<double> grad) {
  const std::size_t n = theta.size();
  if (mas.omega.size() != n || mas.anchor.size() != n || mask.size() != n ||
      (!grad.empty() && grad.size() != n)) {
    fail(ErrorCode::kDimension, "penalty_and_grad: size mismatch");
  }
  if (mas.lambda == 0.0) return 0.0;
  const auto bits = mask.raw();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!bits[i] || mas.omega[i] == 0.0) continue;
    const double drift = theta[i] - mas.anchor[i];
    loss += mas.omega[i] * drift * drift;
    if (!grad.empty()) grad[i] += 2.0 * mas.lambda * mas.omega[i] * drift;
  }
  return mas.lambda * loss;
}

}  // namespace spcl
