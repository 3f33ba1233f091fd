#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace seqcirc {

/// Dense row-major float32 array. Every model activation and weight is one of these.
///
/// Invariant: product(shape) == data.size(). A default-constructed tensor has
/// rank 0 and no elements and is used throughout as "not present".
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Last dimension; 0 for an empty tensor.
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  /// Product of all leading dimensions.
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : data_.size() / cols(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* ptr() noexcept { return data_.data(); }
  const float* ptr() const noexcept { return data_.data(); }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Same data, new shape with identical element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

/// a[m x k] * b[k x n]. Fixed reduction order; bit-reproducible for fixed inputs.
Tensor matmul(const Tensor& a, const Tensor& b);

/// a[m x k] * b[n x k]^T, without materialising the transpose.
Tensor matmul_transposed(const Tensor& a, const Tensor& b);

/// x[... x k] * w[k x n] + bias[n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Per-row normalisation over the last dimension (population variance), then scale/shift.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);
void layer_norm_row(std::span<const float> x, std::span<const float> gamma,
                    std::span<const float> beta, float eps, std::span<float> out);

/// Softmax over the last dimension with max subtraction.
Tensor softmax_last(const Tensor& x);

/// tanh-approximation GELU, elementwise.
Tensor gelu(const Tensor& x);
float gelu(float x);

/// out[i] += x[i]
void add_inplace(Tensor& out, const Tensor& x);

}  // namespace seqcirc
