#include "spcl/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace spcl {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kDegenerateEmbedding: return "degenerate embedding";
    case ErrorCode::kIndex: return "index error";
    case ErrorCode::kArgument: return "argument error";
    case ErrorCode::kScheduleExhausted: return "schedule exhausted";
    case ErrorCode::kState: return "state error";
    case ErrorCode::kUndefinedMetric: return "undefined metric";
    case ErrorCode::kEmptyBuffer: return "empty buffer";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kSchema: return "schema error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kTrainingFailure: return "training failure";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kOracleFailure: return "oracle failure";
  }
  return "unknown error";
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows_ * cols_) {
    fail(ErrorCode::kDimension, "tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string(rows, cols));
  }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) fail(ErrorCode::kDimension, "ragged tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::copy_of(MatRef ref) {
  return Tensor2(ref.rows, ref.cols, std::vector<double>(ref.data, ref.data + ref.size()));
}

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Bitmask Bitmask::from_indices(std::size_t size, std::span<const std::size_t> indices) {
  Bitmask mask(size);
  for (std::size_t i : indices) {
    if (i >= size) fail(ErrorCode::kIndex, "mask index out of range");
    mask.set(i);
  }
  return mask;
}

std::size_t Bitmask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> Bitmask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

void require_same_shape(MatRef a, MatRef b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols) {
    fail(ErrorCode::kDimension, std::string(what) + ": shape " + shape_string(a.rows, a.cols) +
                                    " vs " + shape_string(b.rows, b.cols));
  }
}

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorCode::kNumeric, std::string(what) + ": non-finite value");
  }
}

void require_finite(MatRef m, const char* what) {
  require_finite(std::span<const double>(m.data, m.size()), what);
}

}  // namespace spcl
