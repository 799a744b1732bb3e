#pragma once

// Fine-tuning, early stopping and the experiment drivers built on top of the
// individual modules.

#include "elsa/augment.hpp"
#include "elsa/config.hpp"
#include "elsa/data.hpp"
#include "elsa/encoder.hpp"
#include "elsa/objective.hpp"
#include "elsa/pretrain.hpp"
#include "elsa/prototypes.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace elsa {

// ---- Early stopping ----------------------------------------------------------

/// AUROC separating original validation samples (label 1) from strongly
/// distorted copies (label 0). Both views get one weak draw and are expanded
/// over every shift; a view's score is the sum over shifts of
/// LogSumExp(<f, p> / tau). Deterministic under `seed`.
double earlystop_score(const EncoderParams& encoder, const Matrix& prototypes, const Matrix& validation,
                       const AugmentSuite& aug, double tau, std::uint64_t seed);

// ---- Fine-tuning -------------------------------------------------------------

struct FinetuneConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double tau = 0.5;
  CMode c_mode = CMode::Analytic;
  ScoreKind score = ScoreKind::Energy;
  LossKind loss = LossKind::Elsa;
  bool check_domain = true;
  bool use_shifts = true;  // adds the shift-prediction loss
  double shift_loss_weight = 1.0;
  int refresh_period = 3;
  bool cold_refresh = false;
  std::uint64_t seed = 0;
  std::uint64_t earlystop_seed = 1;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;  // epoch means; zero at epoch 0
  double earlystop_auroc = 0.0;
  std::optional<double> test_auroc;
  bool prototype_refreshed = false;
  // Clean-view training scores, for checking what the loss does.
  double mean_score_labeled_anomaly = 0.0;
  double mean_score_labeled_normal = 0.0;
  double mean_score_unlabeled = 0.0;
  double wallclock_seconds = 0.0;
};

struct FinetuneResult {
  std::size_t best_epoch = 0;  // argmax earlystop_auroc, earliest on ties
  EncoderParams best_encoder;
  PrototypeSet best_prototypes;
  std::vector<MetricsRecord> trace;  // epoch 0 = state before fine-tuning
  bool aborted = false;
  std::string abort_reason;

  const MetricsRecord& best() const;
};

// Called once per recorded epoch with the current model. The only way test
// data enters the loop; its value is stored, never used for decisions.
using TestMonitor = std::function<double(const EncoderParams&, const Matrix& prototypes)>;
using EpochObserver = std::function<void(const MetricsRecord&)>;

/// Fine-tunes on every row of `train` (labeled anomalies included). Prototypes
/// are re-fitted on `cluster_pool` embeddings every `refresh_period` epochs.
/// A NumericError inside an epoch stops training; the result then keeps the
/// best checkpoint seen so far and sets `aborted`.
FinetuneResult finetune_loop(const Dataset& train, const Matrix& validation, const Matrix& cluster_pool,
                             EncoderParams encoder, PrototypeSet prototypes, const AugmentSuite& aug,
                             const FinetuneConfig& cfg, const TestMonitor& monitor = {},
                             const EpochObserver& observer = {});

// ---- Pipeline ------------------------------------------------------------------

AugmentSuite make_augment_suite(const RunConfig& cfg, double data_std);

/// Synthetic pool, optional auxiliary pool and scenario splits for a config.
ScenarioSplits make_splits(const RunConfig& cfg);

// Clustering input: every shifted copy (Elsa+) or the plain samples (Elsa).
Matrix cluster_views(const Matrix& xs, const AugmentSuite& aug);

// Everything up to and including the first prototype fit.
struct PreparedRun {
  RunConfig config;
  ScenarioSplits splits;
  AugmentSuite aug;
  PretrainResult pretrain;
  PrototypeSet prototypes;
  Matrix cluster_pool;  // unaugmented X_u + X_n features
  double data_std = 1.0;
};

PreparedRun prepare_run(const RunConfig& cfg, const PretrainObserver& observer = {});
// Same, on splits read from files.
PreparedRun prepare_from_splits(const RunConfig& cfg, ScenarioSplits splits, const PretrainObserver& observer = {});
// Rebuilds a prepared run around an already pre-trained encoder.
PreparedRun resume_run(const RunConfig& cfg, ScenarioSplits splits, EncoderParams encoder, PrototypeSet prototypes,
                       double data_std);

struct PipelineResult {
  RunConfig config;
  std::uint64_t split_hash = 0;
  std::vector<PretrainEpochRecord> pretrain_trace;
  FinetuneResult finetune;
  double test_auroc = 0.0;      // ensembled score of the selected checkpoint
  double baseline_auroc = 0.0;  // pre-trained encoder, uniformity score, no fine-tuning
  double finetune_seconds = 0.0;
};

// Fine-tunes and evaluates with the score/loss/prototype settings of `cfg`,
// which may differ from the config the run was prepared with in those fields.
PipelineResult finish_run(const PreparedRun& prepared, const RunConfig& cfg, const EpochObserver& observer = {});

PipelineResult run_pipeline(const RunConfig& cfg);

// Test AUROC of the pre-trained encoder under the uniformity score against the
// training pool.
double baseline_auroc(const PreparedRun& prepared);

// Ensembled test AUROC for an encoder/prototype pair.
double test_auroc(const PreparedRun& prepared, const EncoderParams& encoder, const Matrix& prototypes,
                  const RunConfig& cfg, std::size_t samples, std::uint64_t seed);

nlohmann::ordered_json to_json(const MetricsRecord& r);
nlohmann::ordered_json to_json(const PretrainEpochRecord& r);

// ---- Experiment drivers ----------------------------------------------------------

struct ScenarioRow {
  Scenario scenario = Scenario::S2;
  double gamma_l = 0.0;
  double gamma_p = 0.0;
  std::vector<double> auroc;  // one per grid cell
  std::vector<double> baseline;
  double mean = 0.0, sem = 0.0;
  double baseline_mean = 0.0, baseline_sem = 0.0;
};

struct ScenarioReport {
  std::vector<ScenarioRow> rows;
  // One JSON line per epoch and per finished cell, in deterministic order.
  std::vector<std::string> jsonl;
  nlohmann::ordered_json summary;
  std::string csv;
};

struct GridSpec {
  std::size_t data_seeds = 4;
  std::size_t anomaly_mixes = 3;
  std::vector<double> gamma_p = {0.0, 0.05, 0.10};
};

// Anomaly classes of mix `m` out of `mixes`: round-robin split of the classes.
std::vector<int> anomaly_mix(const SyntheticSpec& spec, std::size_t m, std::size_t mixes);

/// Runs every (gamma_p, data seed, anomaly mix) cell. Cells run on up to
/// cfg.workers threads; results do not depend on the worker count.
ScenarioReport run_scenario(const RunConfig& cfg, const GridSpec& grid);

struct AblationEntry {
  ScoreKind score = ScoreKind::Energy;
  LossKind loss = LossKind::Elsa;
};

struct AblationRow {
  AblationEntry entry;
  std::vector<double> auroc;  // one per seed
  std::vector<std::uint64_t> split_hash;
  double mean = 0.0, sem = 0.0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<std::string> jsonl;
  nlohmann::ordered_json summary;
  std::string csv;
};

std::vector<AblationEntry> default_ablation_matrix();

/// Seed-paired ablation: for each seed the splits, pre-training and initial
/// prototypes are shared by every row.
AblationReport run_ablation(const RunConfig& cfg, const std::vector<AblationEntry>& matrix, std::size_t seeds);

double mean_of(const std::vector<double>& xs);
double sem_of(const std::vector<double>& xs);

}  // namespace elsa
