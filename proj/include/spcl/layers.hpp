#pragma once

#include <span>
#include <utility>
#include <vector>

#include "spcl/tensor.hpp"

namespace spcl {

// Saved state for one backward call. Each forward returns the cache its own
// backward consumes; the layer parameters are copied in so the cache stays
// valid even if the caller's storage moves.

struct AffineCache {
  Tensor2 x;
  Tensor2 w;
};

struct AffineGrads {
  Tensor2 dx;
  Tensor2 dw;
  std::vector<double> db;
};

/// y = x Wᵀ + b, with W shaped [out × in].
std::pair<Tensor2, AffineCache> affine(const Tensor2& x, MatRef w, std::span<const double> b);
AffineGrads affine_backward(const AffineCache& cache, const Tensor2& dy);
/// Adds dW and db into the given buffers and returns dx (empty if !want_dx).
Tensor2 affine_backward_accumulate(const AffineCache& cache, const Tensor2& dy,
                                   std::span<double> dw, std::span<double> db,
                                   bool want_dx = true);

struct GeluCache {
  Tensor2 x;
};

/// Exact-erf GELU.
std::pair<Tensor2, GeluCache> gelu(const Tensor2& x);
Tensor2 gelu_backward(const GeluCache& cache, const Tensor2& dy);
double gelu_scalar(double x);
double gelu_derivative(double x);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Tensor2 x_hat;
  std::vector<double> inv_std;
  std::vector<double> gamma;
};

struct LayerNormGrads {
  Tensor2 dx;
  std::vector<double> dgamma;
  std::vector<double> dbeta;
};

std::pair<Tensor2, LayerNormCache> layer_norm(const Tensor2& x, std::span<const double> gamma,
                                              std::span<const double> beta,
                                              double eps = kLayerNormEps);
LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor2& dy);
Tensor2 layer_norm_backward_accumulate(const LayerNormCache& cache, const Tensor2& dy,
                                       std::span<double> dgamma, std::span<double> dbeta);

inline constexpr double kDegenerateNorm = 1e-12;

struct L2NormalizeCache {
  Tensor2 u;
  std::vector<double> norm;
};

/// Row-wise u = v / ‖v‖₂; a single vector is a 1×n tensor.
std::pair<Tensor2, L2NormalizeCache> l2_normalize(const Tensor2& v);
Tensor2 l2_normalize_backward(const L2NormalizeCache& cache, const Tensor2& du);

}  // namespace spcl
