#pragma once

#include <functional>
#include <random>

#include <doctest.h>

#include "spcl/data.hpp"
#include "spcl/error.hpp"
#include "spcl/tensor.hpp"

namespace spcl::test {

inline ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kOk;
}

inline Tensor2 random_tensor(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                             double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor2 t(rows, cols);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

inline double weighted_sum(const Tensor2& y, const Tensor2& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y.values()[i] * r.values()[i];
  return s;
}

// Small universe for fast end-to-end tests.
inline UniverseConfig tiny_universe() {
  UniverseConfig c;
  c.pretrain_classes = 8;
  c.cil_classes = 6;
  c.tasks = 3;
  c.input_dim = 6;
  c.descriptor_dim = 8;
  c.pretrain_per_class = 20;
  c.control_per_class = 10;
  c.cil_train_per_class = 12;
  c.cil_test_per_class = 6;
  c.conditional_size = 20;
  c.superclass_count = 3;
  return c;
}

}  // namespace spcl::test

#define CHECK_CODE(expr, expected) CHECK(::spcl::test::code_of([&] { (void)(expr); }) == (expected))
