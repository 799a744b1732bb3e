#include "elsa/prototypes.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace elsa {

namespace {

// Greedy k-means++ under squared cosine distance: each step samples
// 2 + floor(ln k) candidates and keeps the one that lowers the total
// distance to the nearest center the most.
Matrix seed_plus_plus(const Matrix& pts, std::size_t k, std::uint64_t seed) {
  const Eigen::Index n = pts.rows();
  std::mt19937_64 rng(seed);
  Matrix centers(static_cast<Eigen::Index>(k), pts.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centers.row(0) = pts.row(first(rng));
  auto dist_to = [&](Eigen::Index c) -> Vector {
    return (1.0 - (pts * pts.row(c).transpose()).array()).square().matrix();
  };
  Vector dist = (1.0 - (pts * centers.row(0).transpose()).array()).square().matrix();
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = dist.sum();
    Eigen::Index best_pick = 0;
    Vector best_dist;
    double best_total = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      Eigen::Index pick = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng);
        for (pick = 0; pick < n - 1; ++pick) {
          target -= dist(pick);
          if (target < 0.0) break;
        }
      } else {
        pick = first(rng);
      }
      Vector d = dist.cwiseMin(dist_to(pick));
      const double cand_total = d.sum();
      if (cand_total < best_total) {
        best_total = cand_total;
        best_pick = pick;
        best_dist = std::move(d);
      }
    }
    centers.row(static_cast<Eigen::Index>(c)) = pts.row(best_pick);
    dist = std::move(best_dist);
  }
  return centers;
}

}  // namespace

PrototypeSet fit_prototypes(const Matrix& embeddings, std::size_t k, std::uint64_t seed, const Matrix* warm_start) {
  const Eigen::Index n = embeddings.rows();
  if (k < 1) throw ValidationError("prototype count must be >= 1");
  if (static_cast<std::size_t>(n) < k) {
    throw ValidationError("cannot fit " + std::to_string(k) + " prototypes to " + std::to_string(n) + " points");
  }
  require_finite(embeddings, "clustering input");

  Matrix centers;
  if (warm_start != nullptr) {
    if (static_cast<std::size_t>(warm_start->rows()) != k || warm_start->cols() != embeddings.cols()) {
      throw ValidationError("warm-start prototypes have the wrong shape");
    }
    centers = *warm_start;
  } else {
    centers = seed_plus_plus(embeddings, k, seed);
  }

  PrototypeSet out;
  std::vector<std::size_t> assign(static_cast<std::size_t>(n), k);  // k = unassigned
  for (std::size_t iter = 0; iter < kMaxKMeansIterations; ++iter) {
    const Matrix sims = embeddings * centers.transpose();
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      sims.row(i).maxCoeff(&best);
      if (assign[static_cast<std::size_t>(i)] != static_cast<std::size_t>(best)) {
        assign[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    Matrix sums = Matrix::Zero(static_cast<Eigen::Index>(k), embeddings.cols());
    std::vector<std::size_t> members(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])) += embeddings.row(i);
      ++members[assign[static_cast<std::size_t>(i)]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      const double norm = sums.row(ci).norm();
      // A cluster whose members cancel out keeps its previous direction.
      if (members[c] > 0 && norm > kNormEpsilon) centers.row(ci) = sums.row(ci) / norm;
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      total += embeddings.row(i).dot(centers.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])));
    }
    out.objective_trace.push_back(total / static_cast<double>(n));
    out.iterations = iter + 1;

    for (std::size_t c = 0; c < k; ++c) {
      if (members[c] > 0) continue;
      Eigen::Index worst = 0;
      double worst_sim = 2.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s =
            embeddings.row(i).dot(centers.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])));
        if (s < worst_sim) {
          worst_sim = s;
          worst = i;
        }
      }
      centers.row(static_cast<Eigen::Index>(c)) = embeddings.row(worst);
    }
  }
  // Centroids come from normalized sums or raw unit points; renormalize to
  // remove accumulated rounding.
  out.vectors = normalize_rows(centers);
  out.assignment = std::move(assign);
  return out;
}

PrototypeSet refresh_prototypes(const PrototypeSet& state, const Matrix& embeddings, int epoch, int period,
                                std::uint64_t seed, bool cold) {
  if (period < 1) throw ValidationError("refresh period must be >= 1");
  if (period == kNeverRefresh || epoch - state.last_refresh_epoch < period) return state;
  PrototypeSet next = fit_prototypes(embeddings, state.k(), seed, cold ? nullptr : &state.vectors);
  next.last_refresh_epoch = epoch;
  return next;
}

double clustering_objective(const Matrix& embeddings, const Matrix& prototypes) {
  return (embeddings * prototypes.transpose()).rowwise().maxCoeff().mean();
}

}  // namespace elsa
