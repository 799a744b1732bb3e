#pragma once

// Unsupervised contrastive pre-training of the encoder.
//
// A batch holds two augmented views of the same m instances. Every one of the
// 2m embeddings acts as an anchor once: its positive is the other view of the
// same instance, and its denominator runs over all 2m embeddings except the
// anchor itself (the positive included). The loss averages the 2m anchors.

#include "elsa/augment.hpp"
#include "elsa/data.hpp"
#include "elsa/encoder.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

namespace elsa {

struct ContrastiveBatch {
  Matrix view1;  // m unit rows
  Matrix view2;  // m unit rows, row i pairs with view1 row i
  double tau = 0.5;
};

struct ContrastiveResult {
  double loss = 0.0;
  Matrix grad_view1;
  Matrix grad_view2;
};

struct LossDecomposition {
  double align = 0.0;    // -(1/2m) sum_anchor sim(anchor, positive) / tau
  double uniform = 0.0;  // (1/2m) sum_anchor log sum_{j != anchor} exp(sim / tau)
};

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch);
LossDecomposition decompose_loss(const ContrastiveBatch& batch);

/// Mean in-batch uniformity score: each row's log sum_{j != i} exp(<e_i, e_j>).
double mean_uniformity_score(const Matrix& embeddings);

struct PretrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double tau = 0.5;
  // Adds the shift-prediction cross-entropy and expands every batch with all
  // shifted copies of each sample.
  bool use_shifts = false;
  double shift_loss_weight = 1.0;
  std::uint64_t seed = 0;
  std::size_t probe_size = 128;  // one training-sized batch
  // Re-checks align + uniform == loss on every batch.
  bool check_decomposition = false;
};

struct PretrainEpochRecord {
  std::size_t epoch = 0;
  double train_contrastive = 0.0;  // mean over batches; 0 at epoch 0
  double train_shift = 0.0;
  double probe_contrastive = 0.0;  // fixed probe batch with fixed augmentation draws
  double probe_uniformity = 0.0;   // mean in-batch uniformity score of the clean probe
  double probe_shift_accuracy = 0.0;
  double wallclock_seconds = 0.0;
};

struct PretrainResult {
  EncoderParams encoder;
  std::vector<PretrainEpochRecord> trace;  // epoch 0 = before any update
  std::vector<std::int64_t> seen_ids;      // every sample id used in a batch
};

using PretrainObserver = std::function<void(const PretrainEpochRecord&)>;

/// Trains on the non-anomaly rows of `train`. Labeled anomalies are dropped
/// before batching and never reach the encoder.
PretrainResult pretrain_loop(const Dataset& train, EncoderParams encoder, const AugmentSuite& aug,
                             const PretrainConfig& config, const PretrainObserver& observer = {});

/// Fraction of shifted copies whose head prediction matches the shift id.
double shift_accuracy(const EncoderParams& encoder, const Matrix& xs, const AugmentSuite& aug, Rng& rng);

}  // namespace elsa
