#include "seqcirc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Core>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "seqcirc/errors.hpp"

namespace seqcirc {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(fmt::format("{}: expected a matrix, got shape [{}]", what,
                                 fmt::join(t.shape(), ", ")));
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw ShapeError(fmt::format("tensor shape [{}] needs {} values, got {}",
                                 fmt::join(shape_, ", "), product(shape_), data_.size()));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul lhs");
  require_matrix(b, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError(fmt::format("matmul: inner dimensions differ ({}x{} * {}x{})", a.dim(0),
                                 a.dim(1), b.dim(0), b.dim(1)));
  }
  Tensor out({a.dim(0), b.dim(1)});
  if (out.empty()) return out;
  if (a.dim(1) == 0) return out;
  ConstMap am(a.ptr(), a.dim(0), a.dim(1));
  ConstMap bm(b.ptr(), b.dim(0), b.dim(1));
  MutMap om(out.ptr(), out.dim(0), out.dim(1));
  om.noalias() = am * bm;
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_transposed lhs");
  require_matrix(b, "matmul_transposed rhs");
  if (a.dim(1) != b.dim(1)) {
    throw ShapeError(fmt::format("matmul_transposed: inner dimensions differ ({}x{} * ({}x{})^T)",
                                 a.dim(0), a.dim(1), b.dim(0), b.dim(1)));
  }
  Tensor out({a.dim(0), b.dim(0)});
  if (out.empty() || a.dim(1) == 0) return out;
  ConstMap am(a.ptr(), a.dim(0), a.dim(1));
  ConstMap bm(b.ptr(), b.dim(0), b.dim(1));
  MutMap om(out.ptr(), out.dim(0), out.dim(1));
  om.noalias() = am * bm.transpose();
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_matrix(w, "linear weight");
  if (x.cols() != w.dim(0)) {
    throw ShapeError(fmt::format("linear: input width {} does not match weight rows {}", x.cols(),
                                 w.dim(0)));
  }
  if (bias.numel() != w.dim(1)) {
    throw ShapeError(fmt::format("linear: bias has {} values, expected {}", bias.numel(), w.dim(1)));
  }
  std::vector<std::size_t> shape = x.shape();
  shape.back() = w.dim(1);
  Tensor out(std::move(shape));
  if (out.empty()) return out;
  ConstMap xm(x.ptr(), x.rows(), x.cols());
  ConstMap wm(w.ptr(), w.dim(0), w.dim(1));
  MutMap om(out.ptr(), x.rows(), w.dim(1));
  om.noalias() = xm * wm;
  Eigen::Map<const Eigen::RowVectorXf> bv(bias.ptr(), static_cast<Eigen::Index>(bias.numel()));
  om.rowwise() += bv;
  return out;
}

void layer_norm_row(std::span<const float> x, std::span<const float> gamma,
                    std::span<const float> beta, float eps, std::span<float> out) {
  const std::size_t d = x.size();
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (float v : x) {
    const double c = v - mean;
    var += c * c;
  }
  var /= static_cast<double>(d);
  const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = static_cast<float>((x[j] - mean) * inv) * gamma[j] + beta[j];
  }
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError(fmt::format("layer_norm: width {} but gamma/beta have {}/{} values", d,
                                 gamma.numel(), beta.numel()));
  }
  if (!(eps > 0.0f)) throw ArgumentError("layer_norm: eps must be positive");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    layer_norm_row(x.row(r), gamma.data(), beta.data(), eps, out.row(r));
  }
  return out;
}

Tensor softmax_last(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const float mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& v : o) v *= inv;
  }
  return out;
}

float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (float& v : out.data()) v = gelu(v);
  return out;
}

void add_inplace(Tensor& out, const Tensor& x) {
  if (out.numel() != x.numel()) {
    throw ShapeError(fmt::format("add: {} vs {} elements", out.numel(), x.numel()));
  }
  auto o = out.data();
  auto i = x.data();
  for (std::size_t k = 0; k < o.size(); ++k) o[k] += i[k];
}

}  // namespace seqcirc
