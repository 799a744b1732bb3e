#include "elsa/mathcore.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace elsa {

namespace {

[[noreturn]] void throw_non_finite(std::string_view what) {
  throw NumericError("non-finite value in " + std::string(what));
}

}  // namespace

void require_finite(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw_non_finite(what);
}

void require_finite(const Vector& v, std::string_view what) {
  if (!v.allFinite()) throw_non_finite(what);
}

void require_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw_non_finite(what);
  }
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw NumericError("empty reduction");
  require_finite(values, "logsumexp input");
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

double logsumexp(const Vector& values) {
  return logsumexp(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())));
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) throw NumericError("empty reduction");
  require_finite(logits, "softmax input");
  Vector out = (logits.array() - logits.maxCoeff()).exp().matrix();
  out /= out.sum();
  return out;
}

Vector row_logsumexp(const Matrix& logits) {
  if (logits.cols() == 0) throw NumericError("empty reduction");
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    out(i) = peak + std::log((logits.row(i).array() - peak).exp().sum());
  }
  return out;
}

Matrix row_softmax(const Matrix& logits) {
  if (logits.cols() == 0) throw NumericError("empty reduction");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out.row(i) = (logits.row(i).array() - logits.row(i).maxCoeff()).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Vector l2_normalize(const Vector& v) {
  require_finite(v, "l2_normalize input");
  const double norm = v.norm();
  if (!(norm > kNormEpsilon)) throw NumericError("degenerate vector");
  return v / norm;
}

Vector l2_normalize_backward(const Vector& v, const Vector& grad_u) {
  const double norm = v.norm();
  if (!(norm > kNormEpsilon)) throw NumericError("degenerate vector");
  const Vector u = v / norm;
  return (grad_u - u * u.dot(grad_u)) / norm;
}

Matrix normalize_rows(const Matrix& m, Vector* norms) {
  require_finite(m, "normalize_rows input");
  Matrix out(m.rows(), m.cols());
  Vector n(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    n(i) = m.row(i).norm();
    if (!(n(i) > kNormEpsilon)) throw NumericError("degenerate vector");
    out.row(i) = m.row(i) / n(i);
  }
  if (norms != nullptr) *norms = std::move(n);
  return out;
}

Matrix normalize_rows_backward(const Matrix& unit, const Vector& norms, const Matrix& grad_unit) {
  Matrix out(unit.rows(), unit.cols());
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double along = unit.row(i).dot(grad_unit.row(i));
    out.row(i) = (grad_unit.row(i) - along * unit.row(i)) / norms(i);
  }
  return out;
}

GradCheckReport grad_check(const DifferentiableFn& f, const Vector& point, double h, double abs_floor) {
  Vector analytic(point.size());
  const double f0 = f(point, &analytic);
  if (!std::isfinite(f0)) throw NumericError("non-finite evaluation in grad_check");
  require_finite(analytic, "analytic gradient");

  GradCheckReport report;
  Vector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + h;
    const double plus = f(probe, nullptr);
    probe(i) = point(i) - h;
    const double minus = f(probe, nullptr);
    probe(i) = point(i);
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("non-finite evaluation in grad_check");
    }
    const double numeric = (plus - minus) / (2.0 * h);
    const double denom = std::max({std::abs(analytic(i)), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic(i) - numeric) / denom;
    if (rel > report.max_rel_error || i == 0) {
      report.max_rel_error = rel;
      report.argmax_coordinate = static_cast<std::size_t>(i);
      report.analytic = analytic(i);
      report.numeric = numeric;
    }
  }
  return report;
}

}  // namespace elsa
