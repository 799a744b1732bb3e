#include "elsa/optim.hpp"

#include "elsa/errors.hpp"

#include <cmath>

namespace elsa {

void SgdMomentum::step(Vector& params, const Vector& grad) {
  require_finite(grad, "gradient");
  if (velocity_.size() != params.size()) velocity_ = Vector::Zero(params.size());
  velocity_ = momentum_ * velocity_ + grad + weight_decay_ * params;
  params -= lr_ * velocity_;
}

void Adam::step(Vector& params, const Vector& grad) {
  require_finite(grad, "gradient");
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
  }
  ++steps_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace elsa
