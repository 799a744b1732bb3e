#include "elsa/encoder.hpp"

#include "elsa/errors.hpp"

#include <cmath>
#include <random>

namespace elsa {

namespace {

Matrix silu(const Matrix& z) { return (z.array() / (1.0 + (-z.array()).exp())).matrix(); }

Matrix silu_grad(const Matrix& z) {
  const auto sig = 1.0 / (1.0 + (-z.array()).exp());
  return (sig * (1.0 + z.array() * (1.0 - sig))).matrix();
}

}  // namespace

std::size_t EncoderDims::parameter_count() const {
  return hidden * input + hidden + hidden * hidden + hidden + embed * hidden + embed + shifts * embed + shifts;
}

EncoderParams::Layout EncoderParams::layout_of(const EncoderDims& d) {
  Layout l{};
  std::size_t at = 0;
  l.w1 = at; at += d.hidden * d.input;
  l.b1 = at; at += d.hidden;
  l.w2 = at; at += d.hidden * d.hidden;
  l.b2 = at; at += d.hidden;
  l.w3 = at; at += d.embed * d.hidden;
  l.b3 = at; at += d.embed;
  l.hw = at; at += d.shifts * d.embed;
  l.hb = at; at += d.shifts;
  l.total = at;
  return l;
}

EncoderParams::EncoderParams(const EncoderDims& dims)
    : dims_(dims), layout_(layout_of(dims)), flat_(Vector::Zero(static_cast<Eigen::Index>(layout_.total))) {
  if (dims.input == 0 || dims.hidden == 0 || dims.embed == 0 || dims.shifts == 0) {
    throw ValidationError("encoder dimensions must be positive");
  }
}

#define ELSA_MATRIX_VIEW(name, off, r, c)                                                          \
  EncoderParams::MatrixMap EncoderParams::name() {                                                 \
    return MatrixMap(flat_.data() + layout_.off, static_cast<Eigen::Index>(dims_.r),              \
                     static_cast<Eigen::Index>(dims_.c));                                          \
  }                                                                                                \
  EncoderParams::ConstMatrixMap EncoderParams::name() const {                                      \
    return ConstMatrixMap(flat_.data() + layout_.off, static_cast<Eigen::Index>(dims_.r),         \
                          static_cast<Eigen::Index>(dims_.c));                                     \
  }
#define ELSA_VECTOR_VIEW(name, off, n)                                                             \
  EncoderParams::VectorMap EncoderParams::name() {                                                 \
    return VectorMap(flat_.data() + layout_.off, static_cast<Eigen::Index>(dims_.n));             \
  }                                                                                                \
  EncoderParams::ConstVectorMap EncoderParams::name() const {                                      \
    return ConstVectorMap(flat_.data() + layout_.off, static_cast<Eigen::Index>(dims_.n));        \
  }

ELSA_MATRIX_VIEW(w1, w1, hidden, input)
ELSA_VECTOR_VIEW(b1, b1, hidden)
ELSA_MATRIX_VIEW(w2, w2, hidden, hidden)
ELSA_VECTOR_VIEW(b2, b2, hidden)
ELSA_MATRIX_VIEW(w3, w3, embed, hidden)
ELSA_VECTOR_VIEW(b3, b3, embed)
ELSA_MATRIX_VIEW(head_w, hw, shifts, embed)
ELSA_VECTOR_VIEW(head_b, hb, shifts)

#undef ELSA_MATRIX_VIEW
#undef ELSA_VECTOR_VIEW

EncoderParams init_encoder(const EncoderDims& dims, std::uint64_t seed) {
  EncoderParams p(dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](auto map, std::size_t fan_in) {
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < map.size(); ++i) map.data()[i] = std * normal(rng);
  };
  fill(p.w1(), dims.input);
  fill(p.w2(), dims.hidden);
  fill(p.w3(), dims.hidden);
  fill(p.head_w(), dims.embed);
  return p;
}

ForwardCache forward(const EncoderParams& params, const Matrix& xs) {
  const EncoderDims& d = params.dims();
  if (static_cast<std::size_t>(xs.cols()) != d.input) {
    throw ValidationError("encoder input has dimension " + std::to_string(xs.cols()) + ", expected " +
                          std::to_string(d.input));
  }
  require_finite(xs, "encoder input");
  ForwardCache c;
  c.x = xs;
  c.z1 = (xs * params.w1().transpose()).rowwise() + params.b1().transpose();
  c.a1 = silu(c.z1);
  c.z2 = (c.a1 * params.w2().transpose()).rowwise() + params.b2().transpose();
  c.a2 = silu(c.z2);
  c.feature = (c.a2 * params.w3().transpose()).rowwise() + params.b3().transpose();
  c.embedding = normalize_rows(c.feature, &c.norms);
  return c;
}

Matrix embed(const EncoderParams& params, const Matrix& xs) { return forward(params, xs).embedding; }

Vector embed(const EncoderParams& params, const Vector& x) {
  return forward(params, Matrix(x.transpose())).embedding.row(0).transpose();
}

Matrix shift_logits(const EncoderParams& params, const ForwardCache& cache) {
  return (cache.feature * params.head_w().transpose()).rowwise() + params.head_b().transpose();
}

Vector shift_logits(const EncoderParams& params, const Vector& x) {
  return shift_logits(params, forward(params, Matrix(x.transpose()))).row(0).transpose();
}

EncoderParams backward(const EncoderParams& params, const ForwardCache& cache, const Matrix& grad_embedding,
                       const Matrix* grad_logits) {
  EncoderParams g(params.dims());
  Matrix d_feature = normalize_rows_backward(cache.embedding, cache.norms, grad_embedding);
  if (grad_logits != nullptr) {
    g.head_w() = grad_logits->transpose() * cache.feature;
    g.head_b() = grad_logits->colwise().sum().transpose();
    d_feature += *grad_logits * params.head_w();
  }
  g.w3() = d_feature.transpose() * cache.a2;
  g.b3() = d_feature.colwise().sum().transpose();
  const Matrix d_z2 = (d_feature * params.w3()).cwiseProduct(silu_grad(cache.z2));
  g.w2() = d_z2.transpose() * cache.a1;
  g.b2() = d_z2.colwise().sum().transpose();
  const Matrix d_z1 = (d_z2 * params.w2()).cwiseProduct(silu_grad(cache.z1));
  g.w1() = d_z1.transpose() * cache.x;
  g.b1() = d_z1.colwise().sum().transpose();
  return g;
}

}  // namespace elsa
