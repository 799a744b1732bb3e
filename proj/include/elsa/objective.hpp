#pragma once

// Normality scores and fine-tuning losses.
//
// Scores are "higher = more normal". The prototype energy score is the
// LogSumExp of temperature-scaled cosine similarities to the prototypes; the
// fine-tuning loss pushes it toward C for normal data and toward 0 for
// labeled anomalies through inverse terms 1/S and 1/(C - S).

#include "elsa/augment.hpp"
#include "elsa/data.hpp"
#include "elsa/encoder.hpp"
#include "elsa/mathcore.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace elsa {

// How C is derived from |P| and tau. Analytic: ln|P| + 1/tau, the score when
// every prototype similarity is 1. Appendix: ln(|P| + 1/tau), the literal
// alternative, kept for comparison.
enum class CMode { Analytic, Appendix };

std::string to_string(CMode m);
CMode c_mode_from_string(const std::string& name);

double normalization_constant(std::size_t prototype_count, double tau, CMode mode = CMode::Analytic);

struct ScoreConfig {
  double tau = 0.5;
  double C = 0.0;
  std::size_t prototype_count = 0;

  static ScoreConfig make(double tau, std::size_t prototype_count, CMode mode = CMode::Analytic);
  // ln|P| > 1/tau, which makes every energy score strictly positive.
  bool positivity_holds() const;
};

struct LossBreakdown {
  double total = 0.0;
  double anomaly_term = 0.0;
  double normal_term = 0.0;
  double shift_term = 0.0;
};

// A loss over per-sample scores with its gradient w.r.t. those scores.
struct ScoreLoss {
  LossBreakdown breakdown;
  Vector grad_scores;
};

// ---- Prototype scores ------------------------------------------------------

Vector prototype_posterior(const Vector& embedding, const Matrix& prototypes, double tau);
double energy_score(const Vector& embedding, const Matrix& prototypes, double tau);
double score_cosine(const Vector& embedding, const Matrix& prototypes);

/// log sum_{r in R, r != e} exp(<e, r>) with no temperature. Rows of R equal to
/// `embedding` are excluded; throws if nothing remains.
double score_uniformity(const Vector& embedding, const Matrix& reference);

// ---- Losses ----------------------------------------------------------------

/// Batch mean of 1/(C - S) over labeled anomalies and 1/S over the rest.
/// Throws NumericError("score out of (0, C)") if any S falls outside (0, C),
/// unless check_domain is false, in which case the raw inverse terms are
/// returned whatever their sign.
ScoreLoss loss_elsa(std::span<const double> scores, std::span<const SemiLabel> semis, double C,
                    bool check_domain = true);

/// Batch mean of S over labeled anomalies and -S over the rest.
ScoreLoss loss_naive(std::span<const double> scores, std::span<const SemiLabel> semis);

/// Batch mean of 1/(C - S) over labeled anomalies and -S over the rest.
ScoreLoss loss_deepsad(std::span<const double> scores, std::span<const SemiLabel> semis, double C,
                       bool check_domain = true);

struct ShiftLoss {
  double value = 0.0;
  Matrix grad_logits;
  double accuracy = 0.0;
};

/// Mean softmax cross-entropy of logit rows against shift ids.
ShiftLoss loss_shift(const Matrix& logits, std::span<const std::size_t> ids);

// ---- Named score/loss selection (the ablation matrix) ----------------------

enum class ScoreKind { Energy, Cosine, Uniformity };
enum class LossKind { Elsa, Naive, DeepSad };

std::string to_string(ScoreKind k);
std::string to_string(LossKind k);
ScoreKind score_kind_from_string(const std::string& name);
LossKind loss_kind_from_string(const std::string& name);

// Offset applied to the cosine score during fine-tuning so that it lies in
// [1, 3] and the inverse losses stay defined; C for cosine is 4.
inline constexpr double kCosineTrainOffset = 2.0;
inline constexpr double kCosineTrainC = 4.0;

/// Per-row training scores of a batch of unit embeddings.
///  - Energy: LogSumExp(<e, p> / tau) over prototypes.
///  - Cosine: max_p <e, p> + kCosineTrainOffset.
///  - Uniformity: in-batch log sum_{j != i} exp(<e_i, e_j>).
Vector batch_scores(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau);

// Vector-Jacobian product of batch_scores: d(sum_i g_i S_i)/d embeddings.
Matrix batch_scores_backward(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau,
                             const Vector& grad_scores);

// Upper bound C used by the inverse losses for a score kind and batch size.
double training_constant(ScoreKind kind, std::size_t prototype_count, double tau, std::size_t batch_rows,
                         CMode mode = CMode::Analytic);

// Throws NumericError on a non-finite loss or gradient.
ScoreLoss apply_loss(LossKind kind, std::span<const double> scores, std::span<const SemiLabel> semis, double C,
                     bool check_domain = true);

// ---- Evaluation-time scores --------------------------------------------------

/// Scores unit embeddings for evaluation. Energy and cosine use the
/// prototypes; uniformity scores every row against `reference` (embeddings of
/// the training pool) excluding exact self matches. Cosine is reported
/// without the training offset.
Vector evaluation_scores(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau,
                         const Matrix* reference = nullptr);

enum class EnsembleMode {
  ScoreAverage,      // mean over weak draws and shifts of S(f(t_a(t_s(x))))
  EmbeddingAverage,  // average f over weak draws, then sum per-shift LogSumExp
};

std::string to_string(EnsembleMode m);
EnsembleMode ensemble_mode_from_string(const std::string& name);

struct EnsembleConfig {
  std::size_t n_samples = 10;
  EnsembleMode mode = EnsembleMode::ScoreAverage;
  ScoreKind score = ScoreKind::Energy;
  double tau = 0.5;
};

/// Ensembled normality score of every row of xs. Draws are taken from `rng` in
/// sample-major order so results do not depend on batching.
Vector score_ensemble(const Matrix& xs, const EncoderParams& encoder, const Matrix& prototypes,
                      const AugmentSuite& aug, const EnsembleConfig& cfg, Rng& rng,
                      const Matrix* reference = nullptr);

double score_ensemble(const Vector& x, const EncoderParams& encoder, const Matrix& prototypes,
                      const AugmentSuite& aug, const EnsembleConfig& cfg, Rng& rng,
                      const Matrix* reference = nullptr);

}  // namespace elsa
