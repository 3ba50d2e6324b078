#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "spcl/error.hpp"

namespace spcl {

// Non-owning read-only view of a row-major matrix. Parameters live in the
// model's flat vector and are handed to the kernels through this view.
struct MatRef {
  const double* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data + r * cols, cols}; }
  std::size_t size() const { return rows * cols; }
};

// Dense row-major 64-bit matrix with value semantics.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 row_vector(std::span<const double> values);
  static Tensor2 copy_of(MatRef ref);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  MatRef view() const { return {data_.data(), rows_, cols_}; }
  operator MatRef() const { return view(); }  // NOLINT(google-explicit-constructor)

  bool all_finite() const;
  bool operator==(const Tensor2& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Selection bitmap over the flat parameter space.
class Bitmask {
 public:
  Bitmask() = default;
  explicit Bitmask(std::size_t size, bool value = false) : bits_(size, value ? 1 : 0) {}

  static Bitmask from_indices(std::size_t size, std::span<const std::size_t> indices);

  std::size_t size() const { return bits_.size(); }
  bool test(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) { bits_[i] = value ? 1 : 0; }
  std::size_t count() const;
  std::vector<std::size_t> indices() const;
  std::span<const std::uint8_t> raw() const { return bits_; }

  bool operator==(const Bitmask& other) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

void require_same_shape(MatRef a, MatRef b, const char* what);
void require_finite(std::span<const double> values, const char* what);
void require_finite(MatRef m, const char* what);

std::string shape_string(std::size_t rows, std::size_t cols);

}  // namespace spcl
