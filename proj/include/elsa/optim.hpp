#pragma once

#include "elsa/mathcore.hpp"

namespace elsa {

// First-order optimizers over a flat parameter vector.

class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum, double weight_decay = 0.0)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(Vector& params, const Vector& grad);

 private:
  double lr_;
  double momentum_;
  double weight_decay_;
  Vector velocity_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(Vector& params, const Vector& grad);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long steps_ = 0;
  Vector m_;
  Vector v_;
};

}  // namespace elsa
