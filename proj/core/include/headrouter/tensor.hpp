#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "headrouter/errors.hpp"

namespace headrouter {

/// Dense row-major float32 array.
///
/// Storage is always exactly product(dims) floats. Every dimension is
/// positive; a default-constructed tensor is the only empty one.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims);
  Tensor(std::vector<std::size_t> dims, std::vector<float> data);

  /// Rank-2 tensor from nested initializer lists; all rows must agree.
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
  static Tensor vector(std::vector<float> values);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Rank-2 accessors; rows()/cols() throw ShapeError on other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const float> values() const noexcept { return data_; }
  std::span<float> values() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i);

  float operator()(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }
  float& operator()(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }

  std::string shape_string() const;

 private:
  std::vector<std::size_t> dims_;
  std::vector<float> data_;
};

/// Bitwise equality of dims and payload (distinguishes -0 from +0).
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;
float max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t) noexcept;

/// [p x q] * [q x r]. Double accumulators, fixed left-to-right summation.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(const Tensor& a);

/// a.b / (|a||b|), clamped to [-1, 1]. Returns 0 if either norm is zero.
double cosine(std::span<const float> a, std::span<const float> b);

double sigmoid(double x) noexcept;

Tensor reshape(const Tensor& t, std::vector<std::size_t> dims);
/// Stacks rank-2 tensors with equal column counts.
Tensor concat_rows(const Tensor& top, const Tensor& bottom);
/// Stacks rank-2 tensors side by side (equal row counts).
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& t, std::size_t begin, std::size_t end);
Tensor scale(const Tensor& t, float factor);
Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);

}  // namespace headrouter
