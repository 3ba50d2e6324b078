#include <algorithm>
#include <cmath>
#include <numeric>

#include "spcl/gradcheck.hpp"
#include "spcl/mas.hpp"
#include "spcl/optim.hpp"
#include "spcl/replay.hpp"
#include "spcl/selection.hpp"
#include "support.hpp"

using namespace spcl;
using spcl::test::random_tensor;

TEST_CASE("importance update closed forms") {
  const std::vector<double> zero{0, 0};
  const std::vector<double> raw{2, 4};
  CHECK(update_importance(zero, raw, 0.5) == std::vector<double>{0.25, 0.5});
  const std::vector<double> prev{0.3, 0.7};
  CHECK(update_importance(prev, raw, 0.0) == prev);
  CHECK(update_importance(prev, zero, 1.0) == zero);
  CHECK_CODE(update_importance(prev, std::vector<double>{1}, 0.5), ErrorCode::kDimension);
  CHECK_CODE(update_importance(prev, raw, 1.5), ErrorCode::kArgument);
  CHECK(mas_recurrence_oracle(3).passed);
}

TEST_CASE("penalty closed forms") {
  MasState mas = MasState::zeros(2, 0.5, 0.1);
  mas.omega = {1.0, 1e9};
  mas.anchor = {0.0, 0.0};
  Bitmask mask(2);
  mask.set(0);
  std::vector<double> theta{2.0, 5.0};
  std::vector<double> grad(2, 0.0);
  CHECK(penalty_and_grad(theta, mas, mask, grad) == doctest::Approx(0.4));
  CHECK(grad[0] == doctest::Approx(0.4));
  CHECK(grad[1] == 0.0);

  mas.anchor = theta;
  std::fill(grad.begin(), grad.end(), 0.0);
  CHECK(penalty_and_grad(theta, mas, Bitmask(2, true), grad) == 0.0);
  CHECK(grad == std::vector<double>{0.0, 0.0});

  MasState fresh = MasState::zeros(2);
  fresh.snapshot(std::vector<double>{9, 9});
  CHECK(penalty_and_grad(theta, fresh, Bitmask(2, true)) == 0.0);
}

TEST_CASE("penalty gradient matches finite differences") {
  std::mt19937_64 rng(4);
  MasState mas = MasState::zeros(6, 0.5, 0.05);
  std::uniform_real_distribution<double> u(0, 1);
  for (double& o : mas.omega) o = u(rng);
  mas.anchor = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const Bitmask mask = Bitmask::from_indices(6, std::vector<std::size_t>{0, 2, 5});
  const Tensor2 theta = random_tensor(rng, 1, 6);
  std::vector<double> grad(6, 0.0);
  penalty_and_grad(theta.values(), mas, mask, grad);
  const Tensor2 fd = finite_difference_gradient(
      [&](const Tensor2& t) { return penalty_and_grad(t.values(), mas, mask); }, theta);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(grad[i] - fd.values()[i]) < 1e-8);
}

TEST_CASE("raw importance") {
  std::mt19937_64 rng(6);
  Model m = build_model(BlockSpec{6, 2, 1}, 4, 5, 3);
  const auto eligible = localize_layers(m.registry(), LocalizationMode::kBoth);
  const Tensor2 x = random_tensor(rng, 3, 4);
  const std::vector<std::size_t> cls{1, 2};
  const auto raw = compute_raw_importance(m, x, cls, eligible);
  CHECK(raw.size() == m.param_count());
  Bitmask el = Bitmask::from_indices(m.param_count(), eligible);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(raw[i] >= 0.0);
    if (!el.test(i)) CHECK(raw[i] == 0.0);
  }

  // repetition leaves the mean unchanged
  Tensor2 doubled(6, 4);
  std::copy(x.values().begin(), x.values().end(), doubled.values().begin());
  std::copy(x.values().begin(), x.values().end(), doubled.values().begin() + 12);
  const std::vector<std::size_t> cls2{1, 2, 1, 2};
  const auto raw2 = compute_raw_importance(m, doubled, cls2, eligible);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(raw2[i] == doctest::Approx(raw[i]).epsilon(1e-12));

  // zero output gives zero importance
  Model z = build_model(BlockSpec{6, 2, 1}, 4, 5, 3);
  for (double& v : z.mutable_params()) v = 0.0;
  const auto rz = compute_raw_importance(z, x, std::vector<std::size_t>{}, eligible);
  CHECK(std::all_of(rz.begin(), rz.end(), [](double v) { return v == 0.0; }));
  CHECK_CODE(compute_raw_importance(m, Tensor2(0, 4), std::vector<std::size_t>{}, eligible),
             ErrorCode::kArgument);
}

TEST_CASE("reservoir basics") {
  std::mt19937_64 rng(1);
  ReplayBuffer buf(5);
  for (std::size_t i = 0; i < 3; ++i) buf.reservoir_insert({{double(i)}, i, 0}, rng);
  REQUIRE(buf.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(buf.items()[i].label == i);
  for (std::size_t i = 3; i < 40; ++i) {
    buf.reservoir_insert({{double(i)}, i, 1}, rng);
    CHECK(buf.size() == std::min<std::size_t>(i + 1, 5));
    CHECK(buf.seen_count() == i + 1);
  }
  CHECK(ReplayBuffer(4).empty());
  CHECK_CODE(ReplayBuffer(4).sample_batch(2, rng), ErrorCode::kEmptyBuffer);
  CHECK_CODE(ReplayBuffer::restore(2, {{{}, 0, 0}, {{}, 1, 0}, {{}, 2, 0}}, 3), ErrorCode::kState);
}

TEST_CASE("sampling with and without replacement") {
  std::mt19937_64 rng(2);
  ReplayBuffer buf(6);
  for (std::size_t i = 0; i < 6; ++i) buf.reservoir_insert({{}, i, 0}, rng);
  auto perm = buf.sample_batch(6, rng);
  std::vector<std::size_t> labels;
  for (const auto& it : perm) labels.push_back(it.label);
  std::sort(labels.begin(), labels.end());
  CHECK(labels == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});

  ReplayBuffer one(3);
  one.reservoir_insert({{1.5}, 7, 2}, rng);
  const auto four = one.sample_batch(4, rng);
  CHECK(four.size() == 4);
  for (const auto& it : four) CHECK(it.label == 7);
}

TEST_CASE("reservoir retention and sampling frequencies are uniform") {
  CHECK(reservoir_oracle(11).passed);

  std::mt19937_64 rng(12);
  ReplayBuffer buf(20);
  for (std::size_t i = 0; i < 20; ++i) buf.reservoir_insert({{}, i, 0}, rng);
  std::vector<double> counts(20, 0.0);
  for (int k = 0; k < 100000 / 5; ++k) {
    for (const auto& it : buf.sample_batch(5, rng)) counts[it.label] += 1.0;
  }
  const double expected = 100000.0 / 20.0;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 36.19);  // 99th percentile of chi-square with 19 df
}
