#include "elsa/encoder.hpp"
#include "elsa/errors.hpp"
#include "elsa/objective.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace elsa;

namespace {

EncoderDims small_dims() {
  EncoderDims d;
  d.input = 5;
  d.hidden = 7;
  d.embed = 4;
  d.shifts = 3;
  return d;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("embeddings are unit vectors and stable across calls") {
  const EncoderParams p = init_encoder(small_dims(), 1);
  std::mt19937_64 g(2);
  const Matrix xs = test::random_matrix(20, 5, g);
  const Matrix e = embed(p, xs);
  for (Eigen::Index i = 0; i < e.rows(); ++i) CHECK(std::abs(e.row(i).norm() - 1.0) < 1e-12);
  CHECK(embed(p, xs) == e);
  const Vector one = embed(p, Vector(xs.row(3).transpose()));
  CHECK((one - e.row(3).transpose()).norm() < 1e-14);
}

TEST_CASE("zero network is degenerate") {
  const EncoderParams p(small_dims());
  CHECK_THROWS_WITH_AS(embed(p, Matrix(Matrix::Ones(2, 5))), "degenerate vector", NumericError);
}

TEST_CASE("input width is checked") {
  const EncoderParams p = init_encoder(small_dims(), 1);
  CHECK_THROWS_AS(embed(p, Matrix(Matrix::Ones(2, 6))), ValidationError);
}

TEST_CASE("zero head gives uniform shift posterior") {
  EncoderParams p = init_encoder(small_dims(), 1);
  p.head_w().setZero();
  p.head_b().setZero();
  std::mt19937_64 g(2);
  const Vector logits = shift_logits(p, test::random_vector(5, g));
  const Vector post = softmax(logits);
  for (Eigen::Index k = 0; k < post.size(); ++k) CHECK(post(k) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("init is seeded and kaiming scaled") {
  EncoderDims d;
  d.input = 100;
  d.hidden = 100;
  d.embed = 16;
  const EncoderParams a = init_encoder(d, 3), b = init_encoder(d, 3), c = init_encoder(d, 4);
  CHECK(a.flat() == b.flat());
  CHECK(a.flat() != c.flat());
  const auto w = a.w1();  // 100 x 100 = 10k entries, fan_in 100
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size()));
  CHECK(std::abs(sd - std::sqrt(2.0 / 100.0)) < 0.1 * std::sqrt(2.0 / 100.0));
  CHECK(a.b1().isZero());
}

TEST_CASE("parameter count matches the layout") {
  const EncoderDims d = small_dims();
  CHECK(d.parameter_count() == 5 * 7 + 7 + 7 * 7 + 7 + 7 * 4 + 4 + 4 * 3 + 3);
  CHECK(static_cast<std::size_t>(EncoderParams(d).flat().size()) == d.parameter_count());
}

TEST_CASE("backward matches finite differences through normalization and the head") {
  const EncoderDims d = small_dims();
  const EncoderParams p0 = init_encoder(d, 5);
  std::mt19937_64 g(6);
  const Matrix xs = test::random_matrix(3, 5, g);
  const Matrix ge = test::random_matrix(3, 4, g);
  const Matrix gl = test::random_matrix(3, 3, g);
  const auto r = grad_check(
      [&](const Vector& flat, Vector* grad) {
        EncoderParams p = p0;
        p.flat() = flat;
        const ForwardCache c = forward(p, xs);
        const Matrix logits = shift_logits(p, c);
        if (grad) *grad = backward(p, c, ge, &gl).flat();
        return (c.embedding.array() * ge.array()).sum() + (logits.array() * gl.array()).sum();
      },
      p0.flat());
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("shift cross-entropy gradient through the encoder") {
  const EncoderDims d = small_dims();
  const EncoderParams p0 = init_encoder(d, 8);
  std::mt19937_64 g(9);
  const Matrix xs = test::random_matrix(4, 5, g);
  const std::vector<std::size_t> ids{0, 1, 2, 1};
  const auto r = grad_check(
      [&](const Vector& flat, Vector* grad) {
        EncoderParams p = p0;
        p.flat() = flat;
        const ForwardCache c = forward(p, xs);
        const ShiftLoss sl = loss_shift(shift_logits(p, c), ids);
        if (grad) *grad = backward(p, c, Matrix::Zero(4, 4), &sl.grad_logits).flat();
        return sl.value;
      },
      p0.flat());
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("a separating head drives shift cross-entropy to zero") {
  // features equal to scaled one-hots, head = identity on the first 3 coords
  EncoderDims d = small_dims();
  EncoderParams p(d);
  p.head_w().setZero();
  for (Eigen::Index k = 0; k < 3; ++k) p.head_w()(k, k) = 1.0;
  Matrix feats = Matrix::Zero(3, 4);
  for (Eigen::Index k = 0; k < 3; ++k) feats(k, k) = 20.0;
  const Matrix logits = feats * p.head_w().transpose();
  const std::vector<std::size_t> ids{0, 1, 2};
  CHECK(loss_shift(logits, ids).value < 1e-3);
}

}
