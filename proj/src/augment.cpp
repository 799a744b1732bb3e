#include "elsa/augment.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace elsa {

namespace {

constexpr double kOrthogonalityTolerance = 1e-9;

std::vector<std::size_t> pick_coordinates(std::size_t dim, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(dim);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` entries are a uniform subset.
  for (std::size_t i = 0; i < count && i + 1 < dim; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, dim - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

ShiftFamily::ShiftFamily(std::vector<Matrix> transforms) : transforms_(std::move(transforms)) {
  if (transforms_.empty()) throw ValidationError("shift family needs at least one transform");
  const Eigen::Index d = transforms_.front().rows();
  for (const Matrix& q : transforms_) {
    if (q.rows() != d || q.cols() != d) throw ValidationError("shift transforms must be square and equal-sized");
    const double err = (q.transpose() * q - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
    if (err >= kOrthogonalityTolerance) throw ValidationError("shift transform is not orthogonal");
  }
  if (transforms_.front() != Matrix::Identity(d, d)) {
    throw ValidationError("shift transform 0 must be the identity");
  }
}

ShiftFamily ShiftFamily::random(std::size_t dim, std::size_t count, std::uint64_t seed) {
  if (dim == 0 || count == 0) throw ValidationError("shift family needs positive dim and count");
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<Matrix> ts{Matrix::Identity(d, d)};
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 1; k < count; ++k) {
    Matrix g(d, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < d; ++j) {
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    }
    ts.push_back(std::move(q));
  }
  return ShiftFamily(std::move(ts));
}

ShiftFamily ShiftFamily::planar(std::size_t dim, std::size_t count) {
  if (dim == 0 || count == 0) throw ValidationError("shift family needs positive dim and count");
  const auto d = static_cast<Eigen::Index>(dim);
  std::vector<Matrix> ts{Matrix::Identity(d, d)};
  for (std::size_t k = 1; k < count; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    // Snap quarter turns so 90-degree maps are exact permutations with signs.
    auto snap = [](double v) { return std::abs(v) < 1e-15 ? 0.0 : v; };
    const double c = snap(std::cos(angle));
    const double s = snap(std::sin(angle));
    Matrix q = Matrix::Identity(d, d);
    for (Eigen::Index i = 0; i + 1 < d; i += 2) {
      q(i, i) = c;
      q(i, i + 1) = -s;
      q(i + 1, i) = s;
      q(i + 1, i + 1) = c;
    }
    ts.push_back(std::move(q));
  }
  return ShiftFamily(std::move(ts));
}

ShiftFamily ShiftFamily::identity(std::size_t dim) { return planar(dim, 1); }

const Matrix& ShiftFamily::transform(std::size_t k) const {
  if (k >= transforms_.size()) {
    throw ValidationError("shift index " + std::to_string(k) + " out of range (count " +
                          std::to_string(transforms_.size()) + ")");
  }
  return transforms_[k];
}

Vector ShiftFamily::apply(const Vector& x, std::size_t k) const {
  const Matrix& q = transform(k);
  if (x.size() != q.cols()) throw ValidationError("shift input dimension mismatch");
  if (k == 0) return x;
  return q * x;
}

Matrix ShiftFamily::apply_rows(const Matrix& xs, std::size_t k) const {
  const Matrix& q = transform(k);
  if (xs.cols() != q.cols()) throw ValidationError("shift input dimension mismatch");
  if (k == 0) return xs;
  return xs * q.transpose();
}

// ---------------------------------------------------------------------------

void WeakAugConfig::validate() const {
  if (!(noise_sigma >= 0.0)) throw ValidationError("augment.weak.noise_sigma must be >= 0");
  if (!(mask_fraction >= 0.0 && mask_fraction < 0.5)) {
    throw ValidationError("augment.weak.mask_fraction must lie in [0, 0.5)");
  }
  if (!(jitter_lo > 0.0 && jitter_lo <= jitter_hi && jitter_hi < 2.0)) {
    throw ValidationError("augment.weak jitter range must satisfy 0 < lo <= hi < 2");
  }
}

void StrongAugConfig::validate(const WeakAugConfig& weak) const {
  if (!(apply_probability >= 0.0 && apply_probability <= 1.0)) {
    throw ValidationError("augment.strong.apply_probability must lie in [0,1]");
  }
  if (!(noise_sigma >= 4.0 * weak.noise_sigma)) {
    throw ValidationError("augment.strong.noise_sigma must be at least 4x the weak noise");
  }
  auto unit = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!unit(permute_fraction) || !unit(flip_fraction)) {
    throw ValidationError("augment.strong fractions must lie in [0,1]");
  }
  if (!(shrink_lo > 0.0 && shrink_lo <= shrink_hi && shrink_hi <= 1.0 && grow_lo >= 1.0 && grow_lo <= grow_hi)) {
    throw ValidationError("augment.strong scale ranges must satisfy 0 < shrink <= 1 <= grow");
  }
  if (n_ops > 0 && pool.empty()) throw ValidationError("augment.strong pool is empty");
}

Vector weak_augment(const Vector& x, const WeakAugConfig& cfg, Rng& rng) {
  require_finite(x, "weak augmentation input");
  if (cfg.is_identity()) return x;
  std::uniform_real_distribution<double> jitter(cfg.jitter_lo, cfg.jitter_hi);
  Vector y = jitter(rng) * x;
  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (Eigen::Index j = 0; j < y.size(); ++j) y(j) += noise(rng);
  }
  const auto dim = static_cast<std::size_t>(x.size());
  const auto masked = static_cast<std::size_t>(std::floor(cfg.mask_fraction * static_cast<double>(dim)));
  for (std::size_t j : pick_coordinates(dim, masked, rng)) y(static_cast<Eigen::Index>(j)) = 0.0;
  return y;
}

Vector strong_augment(const Vector& x, const StrongAugConfig& cfg, Rng& rng) {
  require_finite(x, "strong augmentation input");
  Vector y = x;
  const auto dim = static_cast<std::size_t>(x.size());
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> which(0, cfg.pool.empty() ? 0 : cfg.pool.size() - 1);
  for (std::size_t op = 0; op < cfg.n_ops; ++op) {
    const StrongOp kind = cfg.pool[which(rng)];
    if (!(coin(rng) < cfg.apply_probability)) continue;
    switch (kind) {
      case StrongOp::Permute: {
        const auto n = static_cast<std::size_t>(std::ceil(cfg.permute_fraction * static_cast<double>(dim)));
        auto coords = pick_coordinates(dim, n, rng);
        auto targets = coords;
        std::shuffle(targets.begin(), targets.end(), rng);
        const Vector before = y;
        for (std::size_t i = 0; i < coords.size(); ++i) {
          y(static_cast<Eigen::Index>(targets[i])) = before(static_cast<Eigen::Index>(coords[i]));
        }
        break;
      }
      case StrongOp::SignFlip: {
        const auto n = static_cast<std::size_t>(std::ceil(cfg.flip_fraction * static_cast<double>(dim)));
        for (std::size_t j : pick_coordinates(dim, n, rng)) y(static_cast<Eigen::Index>(j)) *= -1.0;
        break;
      }
      case StrongOp::LargeNoise: {
        std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
        for (Eigen::Index j = 0; j < y.size(); ++j) y(j) += noise(rng);
        break;
      }
      case StrongOp::ExtremeScale: {
        const bool shrink = coin(rng) < 0.5;
        std::uniform_real_distribution<double> factor(shrink ? cfg.shrink_lo : cfg.grow_lo,
                                                      shrink ? cfg.shrink_hi : cfg.grow_hi);
        y *= factor(rng);
        break;
      }
    }
  }
  return y;
}

Vector AugmentSuite::train_view(const Vector& x, std::size_t k, Rng& rng) const {
  return shifts.apply(weak_augment(x, weak, rng), k);
}

Vector AugmentSuite::score_view(const Vector& x, std::size_t k, Rng& rng) const {
  return weak_augment(shifts.apply(x, k), weak, rng);
}

Matrix AugmentSuite::expand_train_views(const Matrix& xs, Rng& rng) const {
  const Eigen::Index n = xs.rows();
  Matrix weak_views(n, xs.cols());
  for (Eigen::Index i = 0; i < n; ++i) weak_views.row(i) = weak_augment(xs.row(i).transpose(), weak, rng).transpose();
  const auto ks = static_cast<Eigen::Index>(shifts.count());
  Matrix out(n * ks, xs.cols());
  for (Eigen::Index k = 0; k < ks; ++k) {
    out.middleRows(k * n, n) = shifts.apply_rows(weak_views, static_cast<std::size_t>(k));
  }
  return out;
}

double feature_std(const Matrix& xs) {
  if (xs.size() < 2) return 1.0;
  const double mean = xs.mean();
  const double var = (xs.array() - mean).square().sum() / static_cast<double>(xs.size() - 1);
  return std::sqrt(var);
}

}  // namespace elsa
