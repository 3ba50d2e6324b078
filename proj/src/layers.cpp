#include "spcl/layers.hpp"

#include <cmath>
#include <numbers>

namespace spcl {

std::pair<Tensor2, AffineCache> affine(const Tensor2& x, MatRef w, std::span<const double> b) {
  if (x.cols() != w.cols || b.size() != w.rows) {
    fail(ErrorCode::kDimension, "affine: x " + shape_string(x.rows(), x.cols()) + ", W " +
                                    shape_string(w.rows, w.cols) + ", b " +
                                    std::to_string(b.size()));
  }
  require_finite(x.values(), "affine input");
  require_finite(w, "affine weight");
  require_finite(b, "affine bias");

  const std::size_t batch = x.rows();
  const std::size_t in = w.cols;
  const std::size_t out = w.rows;
  Tensor2 y(batch, out);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = x.row(r).data();
    double* yr = y.row(r).data();
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w.data + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wo[i];
      yr[o] = acc + b[o];
    }
  }
  return {std::move(y), AffineCache{x, Tensor2::copy_of(w)}};
}

Tensor2 affine_backward_accumulate(const AffineCache& cache, const Tensor2& dy,
                                   std::span<double> dw, std::span<double> db, bool want_dx) {
  const Tensor2& x = cache.x;
  const Tensor2& w = cache.w;
  if (dy.rows() != x.rows() || dy.cols() != w.rows() || dw.size() != w.size() ||
      db.size() != w.rows()) {
    fail(ErrorCode::kDimension, "affine_backward: dy " + shape_string(dy.rows(), dy.cols()));
  }
  const std::size_t in = w.cols();
  const std::size_t out = w.rows();
  Tensor2 dx = want_dx ? Tensor2(x.rows(), in) : Tensor2();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* xr = x.row(r).data();
    const double* dyr = dy.row(r).data();
    double* dxr = want_dx ? dx.row(r).data() : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      db[o] += g;
      if (g == 0.0) continue;
      double* dwo = dw.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dwo[i] += g * xr[i];
      if (dxr != nullptr) {
        const double* wo = w.row(o).data();
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wo[i];
      }
    }
  }
  return dx;
}

AffineGrads affine_backward(const AffineCache& cache, const Tensor2& dy) {
  AffineGrads grads;
  grads.dw = Tensor2(cache.w.rows(), cache.w.cols());
  grads.db.assign(cache.w.rows(), 0.0);
  grads.dx = affine_backward_accumulate(cache, dy, grads.dw.values(), grads.db, true);
  return grads;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

std::pair<Tensor2, GeluCache> gelu(const Tensor2& x) {
  require_finite(x.values(), "gelu input");
  Tensor2 y(x.rows(), x.cols());
  auto xs = x.values();
  auto ys = y.values();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = gelu_scalar(xs[i]);
  return {std::move(y), GeluCache{x}};
}

Tensor2 gelu_backward(const GeluCache& cache, const Tensor2& dy) {
  require_same_shape(cache.x, dy, "gelu_backward");
  Tensor2 dx(dy.rows(), dy.cols());
  auto xs = cache.x.values();
  auto gs = dy.values();
  auto out = dx.values();
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = gs[i] * gelu_derivative(xs[i]);
  return dx;
}

std::pair<Tensor2, LayerNormCache> layer_norm(const Tensor2& x, std::span<const double> gamma,
                                              std::span<const double> beta, double eps) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    fail(ErrorCode::kDimension, "layer_norm: gamma/beta length must equal " +
                                    std::to_string(x.cols()));
  }
  if (!(eps > 0.0)) fail(ErrorCode::kArgument, "layer_norm: eps must be positive");
  require_finite(x.values(), "layer_norm input");

  const std::size_t n = x.cols();
  LayerNormCache cache{Tensor2(x.rows(), n), std::vector<double>(x.rows()),
                       std::vector<double>(gamma.begin(), gamma.end())};
  Tensor2 y(x.rows(), n);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto xr = x.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);
    cache.inv_std[r] = inv_std;
    auto xh = cache.x_hat.row(r);
    auto yr = y.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      xh[c] = (xr[c] - mean) * inv_std;
      yr[c] = gamma[c] * xh[c] + beta[c];
    }
  }
  return {std::move(y), std::move(cache)};
}

Tensor2 layer_norm_backward_accumulate(const LayerNormCache& cache, const Tensor2& dy,
                                       std::span<double> dgamma, std::span<double> dbeta) {
  require_same_shape(cache.x_hat, dy, "layer_norm_backward");
  const std::size_t n = dy.cols();
  if (dgamma.size() != n || dbeta.size() != n) {
    fail(ErrorCode::kDimension, "layer_norm_backward: gradient buffer length");
  }
  Tensor2 dx(dy.rows(), n);
  std::vector<double> dxh(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    auto g = dy.row(r);
    auto xh = cache.x_hat.row(r);
    double sum_dxh = 0.0;
    double sum_dxh_xh = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      dgamma[c] += g[c] * xh[c];
      dbeta[c] += g[c];
      dxh[c] = g[c] * cache.gamma[c];
      sum_dxh += dxh[c];
      sum_dxh_xh += dxh[c] * xh[c];
    }
    auto out = dx.row(r);
    const double s = cache.inv_std[r] * inv_n;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = s * (static_cast<double>(n) * dxh[c] - sum_dxh - xh[c] * sum_dxh_xh);
    }
  }
  return dx;
}

LayerNormGrads layer_norm_backward(const LayerNormCache& cache, const Tensor2& dy) {
  LayerNormGrads grads;
  grads.dgamma.assign(dy.cols(), 0.0);
  grads.dbeta.assign(dy.cols(), 0.0);
  grads.dx = layer_norm_backward_accumulate(cache, dy, grads.dgamma, grads.dbeta);
  return grads;
}

std::pair<Tensor2, L2NormalizeCache> l2_normalize(const Tensor2& v) {
  require_finite(v.values(), "l2_normalize input");
  L2NormalizeCache cache{Tensor2(v.rows(), v.cols()), std::vector<double>(v.rows())};
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto vr = v.row(r);
    double sq = 0.0;
    for (double x : vr) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > kDegenerateNorm)) {
      fail(ErrorCode::kDegenerateEmbedding,
           "l2_normalize: row " + std::to_string(r) + " has norm below threshold");
    }
    cache.norm[r] = norm;
    auto ur = cache.u.row(r);
    for (std::size_t c = 0; c < vr.size(); ++c) ur[c] = vr[c] / norm;
  }
  Tensor2 u = cache.u;
  return {std::move(u), std::move(cache)};
}

Tensor2 l2_normalize_backward(const L2NormalizeCache& cache, const Tensor2& du) {
  require_same_shape(cache.u, du, "l2_normalize_backward");
  Tensor2 dv(du.rows(), du.cols());
  for (std::size_t r = 0; r < du.rows(); ++r) {
    auto u = cache.u.row(r);
    auto g = du.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) dot += u[c] * g[c];
    auto out = dv.row(r);
    for (std::size_t c = 0; c < u.size(); ++c) out[c] = (g[c] - u[c] * dot) / cache.norm[r];
  }
  return dv;
}

}  // namespace spcl
