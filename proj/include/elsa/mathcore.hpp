#pragma once

// Dense numerics shared by every module: row-major matrices, a stable
// LogSumExp, unit-sphere normalization with its backward pass, and a
// central-difference gradient checker.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>

namespace elsa {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Below this norm a vector has no usable direction.
inline constexpr double kNormEpsilon = 1e-12;

// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);
void require_finite(std::span<const double> v, std::string_view what);

/// log(sum(exp(v))) evaluated around max(v); finite for any finite input.
double logsumexp(std::span<const double> values);
double logsumexp(const Vector& values);

/// Softmax with the same max shift as logsumexp.
Vector softmax(const Vector& logits);

/// Row-wise logsumexp and softmax of a logit matrix.
Vector row_logsumexp(const Matrix& logits);
Matrix row_softmax(const Matrix& logits);

Vector l2_normalize(const Vector& v);

// Gradient of a scalar loss w.r.t. v given its gradient w.r.t. u = v/|v|:
// (I - u u^T) grad_u / |v|.
Vector l2_normalize_backward(const Vector& v, const Vector& grad_u);

// Normalizes each row. Writes the original row norms to `norms` when given.
Matrix normalize_rows(const Matrix& m, Vector* norms = nullptr);

// Row-wise counterpart of l2_normalize_backward; `unit` holds the normalized
// rows and `norms` the pre-normalization norms.
Matrix normalize_rows_backward(const Matrix& unit, const Vector& norms, const Matrix& grad_unit);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t argmax_coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Evaluates f at x; when grad is non-null also writes the analytic gradient.
using DifferentiableFn = std::function<double(const Vector& x, Vector* grad)>;

/// Compares the analytic gradient of `f` at `point` with central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
///
/// The relative error of a coordinate is |a - n| / max(|a|, |n|, abs_floor);
/// the floor keeps coordinates whose true gradient is ~0 from reporting
/// round-off noise as relative error. Throws NumericError if any evaluation
/// is non-finite.
GradCheckReport grad_check(const DifferentiableFn& f, const Vector& point, double h = 1e-5,
                           double abs_floor = 1e-4);

}  // namespace elsa
