#pragma once

// MLP encoder f: R^d -> unit sphere in R^z, plus a linear shift-prediction
// head on the pre-normalization feature.
//
//   a1 = silu(W1 x + b1)      (hidden)
//   a2 = silu(W2 a1 + b2)     (hidden)
//   v  = W3 a2 + b3           (embed, pre-normalization)
//   f(x) = v / |v|
//   shift_logits(x) = Wh v + bh
//
// All parameters live in one flat vector so optimizers and gradient checks
// treat them uniformly; the named accessors are views into it.

#include "elsa/mathcore.hpp"

#include <cstddef>
#include <cstdint>

namespace elsa {

struct EncoderDims {
  std::size_t input = 32;
  std::size_t hidden = 64;
  std::size_t embed = 16;
  std::size_t shifts = 4;

  std::size_t parameter_count() const;
  bool operator==(const EncoderDims&) const = default;
};

class EncoderParams {
 public:
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  EncoderParams() = default;
  explicit EncoderParams(const EncoderDims& dims);  // all zeros

  const EncoderDims& dims() const { return dims_; }
  Vector& flat() { return flat_; }
  const Vector& flat() const { return flat_; }

  MatrixMap w1();
  VectorMap b1();
  MatrixMap w2();
  VectorMap b2();
  MatrixMap w3();
  VectorMap b3();
  MatrixMap head_w();
  VectorMap head_b();
  ConstMatrixMap w1() const;
  ConstVectorMap b1() const;
  ConstMatrixMap w2() const;
  ConstVectorMap b2() const;
  ConstMatrixMap w3() const;
  ConstVectorMap b3() const;
  ConstMatrixMap head_w() const;
  ConstVectorMap head_b() const;

 private:
  struct Layout {
    std::size_t w1, b1, w2, b2, w3, b3, hw, hb, total;
  };
  static Layout layout_of(const EncoderDims& d);

  EncoderDims dims_{};
  Layout layout_{};
  Vector flat_;
};

/// Kaiming-scaled Gaussian weights (std sqrt(2 / fan_in)), zero biases.
EncoderParams init_encoder(const EncoderDims& dims, std::uint64_t seed);

struct ForwardCache {
  Matrix x;
  Matrix z1, a1, z2, a2;
  Matrix feature;  // v, pre-normalization
  Vector norms;
  Matrix embedding;  // unit rows
};

// Throws ValidationError on a dimension mismatch, NumericError("degenerate
// vector") if some feature row has (near-)zero norm.
ForwardCache forward(const EncoderParams& params, const Matrix& xs);

Matrix embed(const EncoderParams& params, const Matrix& xs);
Vector embed(const EncoderParams& params, const Vector& x);

Matrix shift_logits(const EncoderParams& params, const ForwardCache& cache);
Vector shift_logits(const EncoderParams& params, const Vector& x);

/// Parameter gradient given upstream gradients w.r.t. the unit embeddings and
/// (optionally) the shift logits. Same shape as `params`.
EncoderParams backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_embedding,
                       const Matrix* grad_logits = nullptr);

}  // namespace elsa
