#pragma once

// Vector-space augmentations: weak views for contrastive training and
// ensembling, label-recoverable shifting transforms, and strong distortions
// that stand in for anomalies during early stopping.

#include "elsa/mathcore.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace elsa {

using Rng = std::mt19937_64;

/// A fixed family of orthogonal maps; transform 0 is exactly the identity.
class ShiftFamily {
 public:
  // Seeded Haar-style orthogonal matrices (QR of a Gaussian matrix with the
  // signs of R's diagonal folded into Q).
  static ShiftFamily random(std::size_t dim, std::size_t count, std::uint64_t seed);
  // Rotates consecutive coordinate pairs by k * 360/count degrees.
  // An odd trailing coordinate is left unchanged.
  static ShiftFamily planar(std::size_t dim, std::size_t count);
  static ShiftFamily identity(std::size_t dim);

  // Validates orthogonality and that transforms[0] is the identity.
  explicit ShiftFamily(std::vector<Matrix> transforms);

  std::size_t count() const { return transforms_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(transforms_.front().rows()); }
  const Matrix& transform(std::size_t k) const;

  Vector apply(const Vector& x, std::size_t k) const;
  // Applies transform k to every row of xs.
  Matrix apply_rows(const Matrix& xs, std::size_t k) const;

 private:
  std::vector<Matrix> transforms_;
};

struct WeakAugConfig {
  double noise_sigma = 0.05;
  double mask_fraction = 0.1;
  double jitter_lo = 0.9;
  double jitter_hi = 1.1;

  void validate() const;
  bool is_identity() const {
    return noise_sigma == 0.0 && mask_fraction == 0.0 && jitter_lo == 1.0 && jitter_hi == 1.0;
  }
};

enum class StrongOp { Permute, SignFlip, LargeNoise, ExtremeScale };

struct StrongAugConfig {
  std::size_t n_ops = 3;
  double apply_probability = 0.8;
  double noise_sigma = 1.0;         // LargeNoise
  double permute_fraction = 0.5;    // share of coordinates shuffled by Permute
  double flip_fraction = 0.5;       // share of coordinates negated by SignFlip
  double shrink_lo = 0.2, shrink_hi = 0.5;  // ExtremeScale picks one of the two ranges
  double grow_lo = 2.0, grow_hi = 3.0;
  std::vector<StrongOp> pool = {StrongOp::Permute, StrongOp::SignFlip, StrongOp::LargeNoise,
                                StrongOp::ExtremeScale};

  // Checks ranges and that noise_sigma >= 4x the weak sigma.
  void validate(const WeakAugConfig& weak) const;
};

Vector weak_augment(const Vector& x, const WeakAugConfig& cfg, Rng& rng);
Vector strong_augment(const Vector& x, const StrongAugConfig& cfg, Rng& rng);

/// Everything needed to produce training and scoring views.
struct AugmentSuite {
  ShiftFamily shifts = ShiftFamily::identity(1);
  WeakAugConfig weak;
  StrongAugConfig strong;

  std::size_t shift_count() const { return shifts.count(); }

  // shift_k(weak(x)): the composition used by training, early stopping and
  // the embedding-averaged ensemble.
  Vector train_view(const Vector& x, std::size_t k, Rng& rng) const;
  // weak(shift_k(x)): the composition t_a o t_s of the canonical ensemble.
  Vector score_view(const Vector& x, std::size_t k, Rng& rng) const;

  // One weak draw per sample, then every shift of that view, stacked
  // shift-major: row (k * n + i) holds shift_k(weak(x_i)).
  Matrix expand_train_views(const Matrix& xs, Rng& rng) const;
};

// Global standard deviation of all entries; the unit for augmentation scales.
double feature_std(const Matrix& xs);

}  // namespace elsa
