#pragma once

// Synthetic pools, scenario splits, and on-disk dataset formats.
//
// Training code receives `Dataset`, which carries features, semi-supervision
// labels and ids only. Ground-truth classes live in `GroundTruth` and are
// paired with a Dataset solely for evaluation and persistence.

#include "elsa/mathcore.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace elsa {

enum class SemiLabel : std::int8_t {
  Unlabeled = 0,
  LabeledNormal = 1,
  LabeledAnomaly = -1,
};

int to_wire(SemiLabel s);
SemiLabel semi_from_wire(int wire);

struct Dataset {
  Matrix features;  // one sample per row
  std::vector<SemiLabel> semi;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return semi.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  bool empty() const { return semi.empty(); }

  Dataset subset(std::span<const std::size_t> rows) const;
  // Rows whose label is not LabeledAnomaly (the "mostly normal" pool).
  Dataset without_anomalies() const;
  std::size_t count(SemiLabel s) const;
};

struct GroundTruth {
  std::vector<int> true_class;
};

struct LabeledDataset {
  Dataset data;
  GroundTruth truth;
};

// Binary targets for AUROC: 1 where true_class == normal_class.
std::vector<int> normal_indicator(const GroundTruth& truth, int normal_class);

// ---------------------------------------------------------------------------
// Synthetic generation

struct SyntheticSpec {
  std::size_t input_dim = 32;
  std::size_t normal_subcluster_count = 4;
  std::size_t anomaly_class_count = 9;
  double cluster_spread = 1.0;         // sigma_c: scale of class/subcluster means
  double within_cluster_spread = 0.6;   // sigma_w: per-sample noise around a mean
  std::size_t samples_per_class = 1000;
  std::uint64_t seed = 0;
  // Offsets every drawn mean; used to build shifted auxiliary distributions.
  double mean_offset = 0.0;
  int first_class_id = 0;

  void validate() const;
};

// Class-tagged sample pool. Class `normal_class` is the normal distribution.
struct Pool {
  Matrix features;
  std::vector<int> true_class;
  std::vector<int> subcluster;  // -1 when not applicable
  int normal_class = 0;
  std::int64_t id_offset = 0;

  std::size_t size() const { return true_class.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  std::vector<int> classes() const;
  std::vector<std::size_t> indices_of(int cls) const;
};

struct SyntheticPool {
  Pool pool;
  std::vector<Vector> normal_means;
  std::vector<Vector> anomaly_means;
};

/// Normal class: equal-weight mixture of `normal_subcluster_count` Gaussians.
/// Every anomaly class: one Gaussian. All means are pairwise at least
/// 2 * cluster_spread apart. Features are rounded to 32-bit precision so that
/// dataset files round-trip exactly.
SyntheticPool generate(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Scenarios

enum class Scenario { S1, S2, S3 };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& name);

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  double gamma_l = 0.05;
  double gamma_p = 0.0;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
  double validation_fraction = 0.05;
  // Anomaly classes eligible for labels, contamination, and test outliers.
  // Empty means every non-normal class of the pool.
  std::vector<int> anomaly_classes;
};

struct ScenarioSplits {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
  int normal_class = 0;
  std::uint64_t split_hash = 0;
};

/// Splits a pool into train (X_u + X_n + X_a), a frozen validation subset of
/// the unlabeled split, and a held-out test set.
///
/// Scenario-3 draws X_a from `auxiliary` instead of the pool's anomaly classes.
ScenarioSplits build_scenario(const Pool& pool, const ScenarioConfig& config,
                              const Pool* auxiliary = nullptr);

// FNV-1a over ids, labels and feature bytes of all three splits.
std::uint64_t hash_splits(const ScenarioSplits& splits);

// ---------------------------------------------------------------------------
// Files

// Header line {"version":1,"dim":d,"count":n}, then n little-endian float32
// rows of (features..., semi wire label, true_class). Ids are row indices.
void write_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset read_dataset(const std::filesystem::path& path);

// CIFAR-10 binary batch: 3073-byte records (label, 3072 CHW pixel bytes).
// Pixels are scaled to [0,1] and average-pooled by `pool_factor` per spatial
// axis, giving 3 * (32 / pool_factor)^2 features.
Pool read_cifar10_binary(const std::filesystem::path& path, std::size_t pool_factor = 4);

}  // namespace elsa
