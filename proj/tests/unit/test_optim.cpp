#include <cmath>

#include "spcl/optim.hpp"
#include "support.hpp"

using namespace spcl;

TEST_CASE("adamw first step") {
  std::vector<double> theta{0.0};
  std::vector<double> grad{1.0};
  AdamWState state = AdamWState::zeros(1);
  adamw_masked_step(theta, grad, Bitmask(1, true), state, 0.1);
  CHECK(std::abs(theta[0] + 0.1) < 1e-7);
  CHECK(state.step_count == 1);
}

TEST_CASE("masked-out entries never move") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> theta(20);
  for (double& v : theta) v = normal(rng);
  const auto before = theta;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamWState state = AdamWState::zeros(theta.size(), cfg);
  const auto m0 = state.m;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> grad(theta.size());
    for (double& g : grad) g = normal(rng);
    adamw_masked_step(theta, grad, Bitmask(theta.size()), state, 1e-2);
  }
  CHECK(theta == before);
  CHECK(state.m == m0);

  // partial mask: only masked-in entries change
  Bitmask mask(theta.size());
  mask.set(3);
  mask.set(11);
  std::vector<double> grad(theta.size(), 1.0);
  adamw_masked_step(theta, grad, mask, state, 1e-2);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (mask.test(i)) {
      CHECK(theta[i] != before[i]);
    } else {
      CHECK(theta[i] == before[i]);
      CHECK(state.v[i] == 0.0);
    }
  }
}

TEST_CASE("adamw shape errors") {
  std::vector<double> theta(3), grad(2);
  AdamWState state = AdamWState::zeros(3);
  CHECK_CODE(adamw_masked_step(theta, grad, Bitmask(3), state, 0.1), ErrorCode::kDimension);
}

TEST_CASE("cosine warmup schedule") {
  LrSchedule s{7.5e-6, 10, 100, 0.0};
  CHECK(cosine_warmup_lr(0, s) == 0.0);
  CHECK(cosine_warmup_lr(10, s) == doctest::Approx(7.5e-6).epsilon(1e-12));
  CHECK(cosine_warmup_lr(100, s) == doctest::Approx(0.0));
  CHECK_CODE(cosine_warmup_lr(101, s), ErrorCode::kScheduleExhausted);
  double prev = -1;
  for (std::size_t t = 0; t <= 100; ++t) {
    const double lr = cosine_warmup_lr(t, s);
    CHECK(lr >= 0.0);
    CHECK(lr <= s.base_lr);
    if (t <= 10) CHECK(lr >= prev);
    prev = lr;
  }
  // continuity at the warmup boundary
  CHECK(std::abs(cosine_warmup_lr(11, s) - cosine_warmup_lr(10, s)) < 1e-8);

  const auto d = LrSchedule::with_default_warmup(1e-3, 75);
  CHECK(d.warmup_steps == 7);
  CHECK(d.total_steps == 75);
  CHECK(LrSchedule{}.base_lr == 7.5e-6);
}

TEST_CASE("relative error") {
  const std::vector<double> a{1.0, 0.0, -2.0};
  const std::vector<double> b{1.0, 0.0, -2.0};
  CHECK(max_relative_error(a, b) == 0.0);
  const std::vector<double> c{1.1, 0.0, -2.0};
  CHECK(max_relative_error(a, c) == doctest::Approx(0.1 / 1.1));
}
