#pragma once

// Spherical k-means prototypes over unit embeddings.

#include "elsa/mathcore.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace elsa {

struct PrototypeSet {
  Matrix vectors;  // k unit rows
  int last_refresh_epoch = 0;
  std::vector<double> objective_trace;  // mean cosine to the assigned prototype, per iteration
  std::vector<std::size_t> assignment;  // cluster of every fitted point
  std::size_t iterations = 0;

  std::size_t k() const { return static_cast<std::size_t>(vectors.rows()); }
};

inline constexpr int kNeverRefresh = std::numeric_limits<int>::max();
inline constexpr std::size_t kMaxKMeansIterations = 100;

/// Greedy k-means++ seeding under cosine distance, then alternating argmax-cosine
/// assignment and normalized-mean centroids until the assignment repeats or
/// kMaxKMeansIterations is reached. An empty cluster is re-seeded at the point
/// least similar to its own centroid. `warm_start`, when given, replaces the
/// seeding step.
PrototypeSet fit_prototypes(const Matrix& embeddings, std::size_t k, std::uint64_t seed,
                            const Matrix* warm_start = nullptr);

/// Re-fits when epoch - last_refresh_epoch >= period; otherwise returns the
/// input unchanged. Warm-started from the current prototypes unless `cold`.
PrototypeSet refresh_prototypes(const PrototypeSet& state, const Matrix& embeddings, int epoch, int period,
                                std::uint64_t seed, bool cold = false);

// Mean cosine of each point to its best prototype.
double clustering_objective(const Matrix& embeddings, const Matrix& prototypes);

}  // namespace elsa
