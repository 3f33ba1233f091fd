#include <cmath>
#include <random>

#include "doctest.h"
#include "seqcirc/errors.hpp"
#include "seqcirc/tensor.hpp"

using namespace seqcirc;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor t({r, c});
  for (float& v : t.data()) v = dist(gen);
  return t;
}

}  // namespace

TEST_CASE("tensor construction checks the element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("matmul identity and scalar cases") {
  const Tensor a = random_matrix(3, 3, 1);
  CHECK(matmul(Tensor::identity(3), a) == a);
  CHECK(matmul(a, Tensor::identity(3)) == a);
  const Tensor p = matmul(Tensor::matrix(1, 1, {2.0f}), Tensor::matrix(1, 1, {3.0f}));
  CHECK(p.at(0, 0) == 6.0f);
}

TEST_CASE("matmul matches a triple loop") {
  const Tensor a = random_matrix(7, 5, 2);
  const Tensor b = random_matrix(5, 4, 3);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double ref = 0.0;
      for (std::size_t k = 0; k < 5; ++k) ref += static_cast<double>(a.at(i, k)) * b.at(k, j);
      CHECK(std::abs(c.at(i, j) - ref) <= 1e-6 * std::max(1.0, std::abs(ref)));
    }
  }
  const Tensor ct = matmul_transposed(a, random_matrix(4, 5, 3).reshaped({4, 5}));
  CHECK(ct.shape() == std::vector<std::size_t>{7, 4});
}

TEST_CASE("matmul_transposed equals matmul with an explicit transpose") {
  const Tensor a = random_matrix(6, 5, 4);
  const Tensor b = random_matrix(3, 5, 5);
  Tensor bt({5, 3});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) bt.at(k, i) = b.at(i, k);
  const Tensor x = matmul_transposed(a, b);
  const Tensor y = matmul(a, bt);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-6));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({4, 2})), ShapeError);
  CHECK_THROWS_AS(matmul_transposed(Tensor({2, 3}), Tensor({4, 2})), ShapeError);
}

TEST_CASE("layer_norm") {
  const Tensor ones({2}, 1.0f);
  const Tensor zeros({2}, 0.0f);

  SUBCASE("constant rows map to beta") {
    const Tensor x = Tensor::matrix(2, 2, {3.0f, 3.0f, -1.0f, -1.0f});
    const Tensor y = layer_norm(x, ones, zeros, 1e-5f);
    for (float v : y.data()) CHECK(v == 0.0f);
    const Tensor b = Tensor({2}, std::vector<float>{0.25f, -4.0f});
    const Tensor z = layer_norm(x, ones, b, 1e-5f);
    CHECK(z.at(0, 0) == 0.25f);
    CHECK(z.at(1, 1) == -4.0f);
  }

  SUBCASE("[1,-1] against the formula") {
    const Tensor y = layer_norm(Tensor::matrix(1, 2, {1.0f, -1.0f}), ones, zeros, 1e-5f);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.at(0, 0) == doctest::Approx(expect).epsilon(1e-7));
    CHECK(y.at(0, 1) == doctest::Approx(-expect).epsilon(1e-7));
  }

  SUBCASE("rows are centred") {
    const Tensor x = random_matrix(5, 64, 9);
    const Tensor y = layer_norm(x, Tensor({64}, 1.0f), Tensor({64}, 0.0f), 1e-5f);
    for (std::size_t r = 0; r < 5; ++r) {
      double mean = 0.0;
      for (float v : y.row(r)) mean += v;
      CHECK(std::abs(mean / 64.0) < 1e-5);
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(layer_norm(Tensor({1, 3}), ones, zeros, 1e-5f), ShapeError);
    CHECK_THROWS_AS(layer_norm(Tensor({1, 2}), ones, zeros, 0.0f), ArgumentError);
  }
}

TEST_CASE("softmax_last") {
  const Tensor a = softmax_last(Tensor::matrix(1, 2, {0.0f, 0.0f}));
  CHECK(a.at(0, 0) == doctest::Approx(0.5));
  const Tensor b = softmax_last(Tensor::matrix(1, 2, {0.0f, std::log(3.0f)}));
  CHECK(b.at(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(b.at(0, 1) == doctest::Approx(0.75).epsilon(1e-6));

  const Tensor x = random_matrix(4, 9, 11);
  Tensor shifted = x;
  for (float& v : shifted.data()) v += 37.5f;
  const Tensor sx = softmax_last(x);
  const Tensor ss = softmax_last(shifted);
  for (std::size_t r = 0; r < 4; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      sum += sx.at(r, j);
      CHECK(std::abs(sx.at(r, j) - ss.at(r, j)) < 1e-6);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0f) == 0.0f);
  CHECK(std::abs(gelu(10.0f) - 10.0f) < 1e-4);
  const double x = 1.0;
  const double ref = 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (x + 0.044715 * x * x * x)));
  CHECK(gelu(1.0f) == doctest::Approx(ref).epsilon(1e-6));
  const Tensor t = gelu(Tensor::matrix(1, 3, {-1.0f, 0.0f, 1.0f}));
  CHECK(t.at(0, 2) == gelu(1.0f));
}

TEST_CASE("kernels are bit-deterministic") {
  const Tensor a = random_matrix(31, 47, 21);
  const Tensor b = random_matrix(47, 29, 22);
  CHECK(matmul(a, b) == matmul(a, b));
  const Tensor g({47}, 1.3f);
  const Tensor be({47}, -0.2f);
  CHECK(layer_norm(a, g, be, 1e-5f) == layer_norm(a, g, be, 1e-5f));
  CHECK(softmax_last(a) == softmax_last(a));
}

TEST_CASE("linear adds the bias to every row") {
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor w = Tensor::matrix(2, 3, {1, 0, 1, 0, 1, 1});
  const Tensor b({3}, std::vector<float>{10, 20, 30});
  const Tensor y = linear(x, w, b);
  CHECK(y == Tensor::matrix(2, 3, {11, 22, 33, 13, 24, 37}));
  CHECK_THROWS_AS(linear(x, w, Tensor({2})), ShapeError);
}
