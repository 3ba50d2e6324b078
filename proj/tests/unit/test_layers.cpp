#include <cmath>

#include "spcl/layers.hpp"
#include "spcl/optim.hpp"
#include "support.hpp"

using namespace spcl;
using spcl::test::random_tensor;
using spcl::test::weighted_sum;

TEST_CASE("tensor shapes and masks") {
  Tensor2 t{{1, 2, 3}, {4, 5, 6}};
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK_CODE(Tensor2(2, 2, std::vector<double>{1, 2, 3}), ErrorCode::kDimension);

  const std::vector<std::size_t> idx{1, 4};
  Bitmask m = Bitmask::from_indices(6, idx);
  CHECK(m.count() == 2);
  CHECK(m.indices() == idx);
  CHECK_CODE(Bitmask::from_indices(3, idx), ErrorCode::kIndex);
}

TEST_CASE("affine forward and backward") {
  Tensor2 eye{{1, 0}, {0, 1}};
  std::vector<double> zero{0, 0};
  auto [y, cache] = affine(Tensor2{{3, 4}}, eye, zero);
  CHECK(y == Tensor2{{3, 4}});

  auto [y2, c2] = affine(Tensor2{{1, 2}}, eye, zero);
  const auto g = affine_backward(c2, Tensor2{{1, 1}});
  CHECK(g.dw == Tensor2{{1, 2}, {1, 2}});
  CHECK(g.db == std::vector<double>{1, 1});

  std::mt19937_64 rng(3);
  const Tensor2 x = random_tensor(rng, 2, 4);
  const Tensor2 w = random_tensor(rng, 3, 4);
  const std::vector<double> b{0.1, -0.2, 0.3};
  const Tensor2 r = random_tensor(rng, 2, 3);
  const auto grads = affine_backward(affine(x, w, b).second, r);
  const Tensor2 fd = finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(affine(x, t, b).first, r); }, w);
  CHECK(max_relative_error(grads.dw.values(), fd.values()) < 1e-6);

  CHECK_CODE(affine(Tensor2(1, 3), eye, zero), ErrorCode::kDimension);
}

TEST_CASE("gelu values and derivative") {
  auto [y, cache] = gelu(Tensor2{{0.0, -10.0, 1.0}});
  CHECK(y(0, 0) == 0.0);
  CHECK(std::abs(y(0, 1)) < 1e-9);
  CHECK(y(0, 2) == doctest::Approx(0.8413447460685429).epsilon(1e-12));
  CHECK(gelu_derivative(0.0) == 0.5);

  std::mt19937_64 rng(5);
  const Tensor2 x = random_tensor(rng, 1, 7, 2.0);
  const Tensor2 r = random_tensor(rng, 1, 7);
  const Tensor2 dx = gelu_backward(gelu(x).second, r);
  const Tensor2 fd = finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(gelu(t).first, r); }, x);
  CHECK(max_relative_error(dx.values(), fd.values()) < 1e-6);
}

TEST_CASE("layer norm") {
  const std::vector<double> ones{1, 1, 1};
  const std::vector<double> zeros{0, 0, 0};
  CHECK(layer_norm(Tensor2{{5, 5, 5}}, ones, zeros).first == Tensor2{{0, 0, 0}});

  const std::vector<double> beta{0.5, -1, 2};
  CHECK(layer_norm(Tensor2{{1, 7, -3}}, zeros, beta).first == Tensor2{{0.5, -1, 2}});

  std::mt19937_64 rng(7);
  const Tensor2 x = random_tensor(rng, 2, 5);
  const Tensor2 gamma = random_tensor(rng, 1, 5);
  const Tensor2 b = random_tensor(rng, 1, 5);
  const Tensor2 r = random_tensor(rng, 2, 5);
  auto f = [&](const Tensor2& xx, const Tensor2& gg, const Tensor2& bb) {
    return weighted_sum(layer_norm(xx, gg.values(), bb.values()).first, r);
  };
  const auto g = layer_norm_backward(layer_norm(x, gamma.values(), b.values()).second, r);
  CHECK(max_relative_error(g.dx.values(),
                           finite_difference_gradient([&](const Tensor2& t) { return f(t, gamma, b); }, x)
                               .values()) < 1e-5);
  CHECK(max_relative_error(g.dgamma,
                           finite_difference_gradient([&](const Tensor2& t) { return f(x, t, b); }, gamma)
                               .values()) < 1e-5);
  CHECK(max_relative_error(g.dbeta,
                           finite_difference_gradient([&](const Tensor2& t) { return f(x, gamma, t); }, b)
                               .values()) < 1e-5);

  CHECK_CODE(layer_norm(x, ones, zeros), ErrorCode::kDimension);
}

TEST_CASE("l2 normalize") {
  const Tensor2 u = l2_normalize(Tensor2{{3, 4}}).first;
  CHECK(u(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(l2_normalize(Tensor2{{0, 1, 0}}).first == Tensor2{{0, 1, 0}});
  CHECK_CODE(l2_normalize(Tensor2{{0, 0}}), ErrorCode::kDegenerateEmbedding);

  std::mt19937_64 rng(9);
  const Tensor2 v = random_tensor(rng, 3, 4);
  const auto [n, cache] = l2_normalize(v);
  for (std::size_t i = 0; i < 3; ++i) {
    double s = 0;
    for (double e : n.row(i)) s += e * e;
    CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-12);
  }
  const Tensor2 r = random_tensor(rng, 3, 4);
  const Tensor2 dv = l2_normalize_backward(cache, r);
  const Tensor2 fd = finite_difference_gradient(
      [&](const Tensor2& t) { return weighted_sum(l2_normalize(t).first, r); }, v);
  CHECK(max_relative_error(dv.values(), fd.values()) < 1e-6);
}

TEST_CASE("finite differences") {
  const Tensor2 g = finite_difference_gradient(
      [](const Tensor2& t) { return t(0, 0) * t(0, 0) + t(0, 1) * t(0, 1); }, Tensor2{{1, -2}});
  CHECK(std::abs(g(0, 0) - 2) < 1e-8);
  CHECK(std::abs(g(0, 1) + 4) < 1e-8);
  const Tensor2 z = finite_difference_gradient([](const Tensor2&) { return 3.0; }, Tensor2{{1, 2}});
  CHECK(std::abs(z(0, 0)) < 1e-9);
  CHECK_CODE(finite_difference_gradient([](const Tensor2&) { return NAN; }, Tensor2{{1}}),
             ErrorCode::kNumeric);
}
