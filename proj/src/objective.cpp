#include "elsa/objective.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <limits>
#include <cmath>

namespace elsa {

std::string to_string(CMode m) { return m == CMode::Analytic ? "analytic" : "appendix"; }

CMode c_mode_from_string(const std::string& name) {
  if (name == "analytic") return CMode::Analytic;
  if (name == "appendix") return CMode::Appendix;
  throw ValidationError("unknown c-mode '" + name + "' (expected analytic or appendix)");
}

double normalization_constant(std::size_t prototype_count, double tau, CMode mode) {
  const auto k = static_cast<double>(prototype_count);
  return mode == CMode::Analytic ? std::log(k) + 1.0 / tau : std::log(k + 1.0 / tau);
}

ScoreConfig ScoreConfig::make(double tau, std::size_t prototype_count, CMode mode) {
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (prototype_count == 0) throw ValidationError("prototype count must be >= 1");
  return {tau, normalization_constant(prototype_count, tau, mode), prototype_count};
}

bool ScoreConfig::positivity_holds() const {
  return std::log(static_cast<double>(prototype_count)) > 1.0 / tau;
}

// ---------------------------------------------------------------------------

namespace {

void require_prototypes(const Vector& e, const Matrix& prototypes) {
  if (prototypes.rows() == 0) throw ValidationError("prototype set is empty");
  if (prototypes.cols() != e.size()) throw ValidationError("prototype dimension mismatch");
}

}  // namespace

Vector prototype_posterior(const Vector& embedding, const Matrix& prototypes, double tau) {
  require_prototypes(embedding, prototypes);
  return softmax(prototypes * embedding / tau);
}

double energy_score(const Vector& embedding, const Matrix& prototypes, double tau) {
  require_prototypes(embedding, prototypes);
  return logsumexp(Vector(prototypes * embedding / tau));
}

double score_cosine(const Vector& embedding, const Matrix& prototypes) {
  require_prototypes(embedding, prototypes);
  return (prototypes * embedding).maxCoeff();
}

double score_uniformity(const Vector& embedding, const Matrix& reference) {
  const Matrix e = embedding.transpose();
  return evaluation_scores(ScoreKind::Uniformity, e, Matrix(), 1.0, &reference)(0);
}

// ---------------------------------------------------------------------------

namespace {

void check_batch(std::span<const double> scores, std::span<const SemiLabel> semis) {
  if (scores.size() != semis.size()) throw ValidationError("scores and labels differ in length");
  if (scores.empty()) throw NumericError("empty reduction");
  require_finite(scores, "scores");
}

}  // namespace

ScoreLoss loss_elsa(std::span<const double> scores, std::span<const SemiLabel> semis, double C, bool check_domain) {
  check_batch(scores, semis);
  const double n = static_cast<double>(scores.size());
  ScoreLoss out;
  out.grad_scores.resize(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (check_domain && !(s > 0.0 && s < C)) throw NumericError("score out of (0, C)");
    const auto ii = static_cast<Eigen::Index>(i);
    if (semis[i] == SemiLabel::LabeledAnomaly) {
      const double gap = C - s;
      out.breakdown.anomaly_term += 1.0 / gap / n;
      out.grad_scores(ii) = 1.0 / (gap * gap) / n;
    } else {
      out.breakdown.normal_term += 1.0 / s / n;
      out.grad_scores(ii) = -1.0 / (s * s) / n;
    }
  }
  out.breakdown.total = out.breakdown.anomaly_term + out.breakdown.normal_term;
  return out;
}

ScoreLoss loss_naive(std::span<const double> scores, std::span<const SemiLabel> semis) {
  check_batch(scores, semis);
  const double n = static_cast<double>(scores.size());
  ScoreLoss out;
  out.grad_scores.resize(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (semis[i] == SemiLabel::LabeledAnomaly) {
      out.breakdown.anomaly_term += scores[i] / n;
      out.grad_scores(ii) = 1.0 / n;
    } else {
      out.breakdown.normal_term -= scores[i] / n;
      out.grad_scores(ii) = -1.0 / n;
    }
  }
  out.breakdown.total = out.breakdown.anomaly_term + out.breakdown.normal_term;
  return out;
}

ScoreLoss loss_deepsad(std::span<const double> scores, std::span<const SemiLabel> semis, double C, bool check_domain) {
  check_batch(scores, semis);
  const double n = static_cast<double>(scores.size());
  ScoreLoss out;
  out.grad_scores.resize(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (semis[i] == SemiLabel::LabeledAnomaly) {
      const double gap = C - scores[i];
      if (check_domain && !(gap > 0.0)) throw NumericError("score out of (0, C)");
      out.breakdown.anomaly_term += 1.0 / gap / n;
      out.grad_scores(ii) = 1.0 / (gap * gap) / n;
    } else {
      out.breakdown.normal_term -= scores[i] / n;
      out.grad_scores(ii) = -1.0 / n;
    }
  }
  out.breakdown.total = out.breakdown.anomaly_term + out.breakdown.normal_term;
  return out;
}

ShiftLoss loss_shift(const Matrix& logits, std::span<const std::size_t> ids) {
  if (static_cast<std::size_t>(logits.rows()) != ids.size()) {
    throw ValidationError("shift logits and ids differ in length");
  }
  if (ids.empty()) throw NumericError("empty reduction");
  require_finite(logits, "shift logits");
  const auto n = static_cast<double>(ids.size());
  const Vector lse = row_logsumexp(logits);
  ShiftLoss out;
  out.grad_logits = row_softmax(logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (ids[i] >= static_cast<std::size_t>(logits.cols())) {
      throw ValidationError("shift id " + std::to_string(ids[i]) + " out of range");
    }
    const auto truth = static_cast<Eigen::Index>(ids[i]);
    out.value += (lse(ii) - logits(ii, truth)) / n;
    out.grad_logits(ii, truth) -= 1.0;
    Eigen::Index best = 0;
    logits.row(ii).maxCoeff(&best);
    if (best == truth) ++correct;
  }
  out.grad_logits /= n;
  out.accuracy = static_cast<double>(correct) / n;
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Energy: return "energy";
    case ScoreKind::Cosine: return "cosine";
    case ScoreKind::Uniformity: return "uniformity";
  }
  return "energy";
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Elsa: return "elsa";
    case LossKind::Naive: return "naive";
    case LossKind::DeepSad: return "deepsad";
  }
  return "elsa";
}

ScoreKind score_kind_from_string(const std::string& name) {
  if (name == "energy") return ScoreKind::Energy;
  if (name == "cosine") return ScoreKind::Cosine;
  if (name == "uniformity") return ScoreKind::Uniformity;
  throw ValidationError("unknown score '" + name + "' (expected energy, cosine or uniformity)");
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "elsa") return LossKind::Elsa;
  if (name == "naive") return LossKind::Naive;
  if (name == "deepsad") return LossKind::DeepSad;
  throw ValidationError("unknown loss '" + name + "' (expected elsa, naive or deepsad)");
}

namespace {

// exp(sims - row peak) with the diagonal removed, and the row peaks.
Matrix offdiagonal_exp(Matrix sims, Vector& peak) {
  sims.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  peak = sims.rowwise().maxCoeff();
  return (sims.colwise() - peak).array().exp().matrix();
}

// Softmax weights of in-batch similarities with the diagonal removed.
Matrix offdiagonal_softmax(const Matrix& sims) {
  Vector peak;
  const Matrix e = offdiagonal_exp(sims, peak);
  return (e.array().colwise() / e.rowwise().sum().array()).matrix();
}

Vector offdiagonal_logsumexp(const Matrix& sims) {
  Vector peak;
  const Matrix e = offdiagonal_exp(sims, peak);
  return (peak.array() + e.rowwise().sum().array().log()).matrix();
}

}  // namespace

Vector batch_scores(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau) {
  switch (kind) {
    case ScoreKind::Energy:
      if (prototypes.rows() == 0) throw ValidationError("prototype set is empty");
      return row_logsumexp(embeddings * prototypes.transpose() / tau);
    case ScoreKind::Cosine: {
      if (prototypes.rows() == 0) throw ValidationError("prototype set is empty");
      return ((embeddings * prototypes.transpose()).rowwise().maxCoeff().array() + kCosineTrainOffset).matrix();
    }
    case ScoreKind::Uniformity:
      if (embeddings.rows() < 2) throw ValidationError("uniformity score needs at least 2 rows");
      return offdiagonal_logsumexp(embeddings * embeddings.transpose());
  }
  return {};
}

Matrix batch_scores_backward(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau,
                             const Vector& grad_scores) {
  switch (kind) {
    case ScoreKind::Energy: {
      const Matrix w = row_softmax(embeddings * prototypes.transpose() / tau);
      return grad_scores.asDiagonal() * w * prototypes / tau;
    }
    case ScoreKind::Cosine: {
      const Matrix sims = embeddings * prototypes.transpose();
      Matrix out(embeddings.rows(), embeddings.cols());
      for (Eigen::Index i = 0; i < sims.rows(); ++i) {
        Eigen::Index best = 0;
        sims.row(i).maxCoeff(&best);
        out.row(i) = grad_scores(i) * prototypes.row(best);
      }
      return out;
    }
    case ScoreKind::Uniformity: {
      const Matrix a = grad_scores.asDiagonal() * offdiagonal_softmax(embeddings * embeddings.transpose());
      return a * embeddings + a.transpose() * embeddings;
    }
  }
  return {};
}

double training_constant(ScoreKind kind, std::size_t prototype_count, double tau, std::size_t batch_rows,
                         CMode mode) {
  switch (kind) {
    case ScoreKind::Energy: return normalization_constant(prototype_count, tau, mode);
    case ScoreKind::Cosine: return kCosineTrainC;
    case ScoreKind::Uniformity:
      return std::log(static_cast<double>(batch_rows > 1 ? batch_rows - 1 : 1)) + 1.0;
  }
  return 0.0;
}

ScoreLoss apply_loss(LossKind kind, std::span<const double> scores, std::span<const SemiLabel> semis, double C,
                     bool check_domain) {
  ScoreLoss out;
  switch (kind) {
    case LossKind::Elsa: out = loss_elsa(scores, semis, C, check_domain); break;
    case LossKind::Naive: out = loss_naive(scores, semis); break;
    case LossKind::DeepSad: out = loss_deepsad(scores, semis, C, check_domain); break;
  }
  if (!std::isfinite(out.breakdown.total) || !out.grad_scores.allFinite()) throw NumericError("non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------

Vector evaluation_scores(ScoreKind kind, const Matrix& embeddings, const Matrix& prototypes, double tau,
                         const Matrix* reference) {
  switch (kind) {
    case ScoreKind::Energy:
      if (prototypes.rows() == 0) throw ValidationError("prototype set is empty");
      return row_logsumexp(embeddings * prototypes.transpose() / tau);
    case ScoreKind::Cosine:
      if (prototypes.rows() == 0) throw ValidationError("prototype set is empty");
      return (embeddings * prototypes.transpose()).rowwise().maxCoeff();
    case ScoreKind::Uniformity: {
      if (reference == nullptr || reference->rows() == 0) {
        throw ValidationError("uniformity score needs a nonempty reference set");
      }
      const Matrix sims = embeddings * reference->transpose();
      Vector out(embeddings.rows());
      std::vector<double> kept;
      for (Eigen::Index i = 0; i < sims.rows(); ++i) {
        kept.clear();
        for (Eigen::Index j = 0; j < sims.cols(); ++j) {
          if (sims(i, j) >= 1.0 - 1e-12 && embeddings.row(i) == reference->row(j)) continue;
          kept.push_back(sims(i, j));
        }
        if (kept.empty()) throw ValidationError("uniformity reference set is empty after self-exclusion");
        out(i) = logsumexp(kept);
      }
      return out;
    }
  }
  return {};
}

std::string to_string(EnsembleMode m) { return m == EnsembleMode::ScoreAverage ? "score" : "embedding"; }

EnsembleMode ensemble_mode_from_string(const std::string& name) {
  if (name == "score") return EnsembleMode::ScoreAverage;
  if (name == "embedding") return EnsembleMode::EmbeddingAverage;
  throw ValidationError("unknown ensemble mode '" + name + "' (expected score or embedding)");
}

namespace {

constexpr Eigen::Index kEnsembleChunk = 256;

}  // namespace

Vector score_ensemble(const Matrix& xs, const EncoderParams& encoder, const Matrix& prototypes,
                      const AugmentSuite& aug, const EnsembleConfig& cfg, Rng& rng, const Matrix* reference) {
  if (cfg.n_samples < 1) throw ValidationError("ensemble n_samples must be >= 1");
  const auto ks = static_cast<Eigen::Index>(aug.shift_count());
  const auto draws = static_cast<Eigen::Index>(cfg.n_samples);
  Vector out(xs.rows());
  for (Eigen::Index start = 0; start < xs.rows(); start += kEnsembleChunk) {
    const Eigen::Index n = std::min(kEnsembleChunk, xs.rows() - start);
    // Views of sample i occupy rows [i * per, (i + 1) * per), draw-major.
    const Eigen::Index per = draws * ks;
    Matrix views(n * per, xs.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector x = xs.row(start + i).transpose();
      for (Eigen::Index s = 0; s < draws; ++s) {
        if (cfg.mode == EnsembleMode::ScoreAverage) {
          for (Eigen::Index k = 0; k < ks; ++k) {
            views.row(i * per + s * ks + k) = aug.score_view(x, static_cast<std::size_t>(k), rng).transpose();
          }
        } else {
          const Vector w = weak_augment(x, aug.weak, rng);
          for (Eigen::Index k = 0; k < ks; ++k) {
            views.row(i * per + s * ks + k) = aug.shifts.apply(w, static_cast<std::size_t>(k)).transpose();
          }
        }
      }
    }
    const Matrix emb = embed(encoder, views);
    if (cfg.mode == EnsembleMode::ScoreAverage) {
      const Vector s = evaluation_scores(cfg.score, emb, prototypes, cfg.tau, reference);
      for (Eigen::Index i = 0; i < n; ++i) out(start + i) = s.segment(i * per, per).mean();
    } else {
      // Averaged (unnormalized) embeddings per shift; the energy logits carry
      // no temperature here, matching the reference test routine.
      Matrix mean_emb = Matrix::Zero(n * ks, emb.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index s = 0; s < draws; ++s) {
          for (Eigen::Index k = 0; k < ks; ++k) mean_emb.row(i * ks + k) += emb.row(i * per + s * ks + k);
        }
      }
      mean_emb /= static_cast<double>(draws);
      const Vector s = cfg.score == ScoreKind::Energy
                           ? row_logsumexp(mean_emb * prototypes.transpose())
                           : evaluation_scores(cfg.score, mean_emb, prototypes, cfg.tau, reference);
      for (Eigen::Index i = 0; i < n; ++i) out(start + i) = s.segment(i * ks, ks).sum();
    }
  }
  return out;
}

double score_ensemble(const Vector& x, const EncoderParams& encoder, const Matrix& prototypes,
                      const AugmentSuite& aug, const EnsembleConfig& cfg, Rng& rng, const Matrix* reference) {
  return score_ensemble(Matrix(x.transpose()), encoder, prototypes, aug, cfg, rng, reference)(0);
}

}  // namespace elsa
