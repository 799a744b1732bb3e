#include "elsa/pretrain.hpp"

#include "elsa/errors.hpp"
#include "elsa/objective.hpp"
#include "elsa/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace elsa {

namespace {

struct Stacked {
  Matrix all;  // [view1; view2]
  Eigen::Index m = 0;
};

Stacked stack_views(const ContrastiveBatch& batch) {
  if (batch.view1.rows() != batch.view2.rows() || batch.view1.cols() != batch.view2.cols()) {
    throw ValidationError("contrastive views must have identical shapes");
  }
  if (batch.view1.rows() < 2) throw ValidationError("contrastive batch needs m >= 2 (no negatives exist)");
  if (!(batch.tau > 0.0)) throw ValidationError("tau must be positive");
  Stacked s;
  s.m = batch.view1.rows();
  s.all.resize(2 * s.m, batch.view1.cols());
  s.all.topRows(s.m) = batch.view1;
  s.all.bottomRows(s.m) = batch.view2;
  require_finite(s.all, "contrastive embeddings");
  return s;
}

Eigen::Index positive_of(Eigen::Index a, Eigen::Index m) { return a < m ? a + m : a - m; }

// Per-anchor alignment and uniformity terms. On return `weights` holds the
// softmax over j != a of row a (zero on the diagonal).
void anchor_terms(Matrix logits, Eigen::Index m, Vector& align, Vector& uniform, Matrix* weights = nullptr) {
  const Eigen::Index n = logits.rows();
  align.resize(n);
  for (Eigen::Index a = 0; a < n; ++a) align(a) = -logits(a, positive_of(a, m));
  logits.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  const Vector peak = logits.rowwise().maxCoeff();
  logits = (logits.colwise() - peak).array().exp().matrix();
  const Vector sums = logits.rowwise().sum();
  uniform = (peak.array() + sums.array().log()).matrix();
  if (weights != nullptr) *weights = (logits.array().colwise() / sums.array()).matrix();
}

}  // namespace

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch) {
  const Stacked s = stack_views(batch);
  const Eigen::Index n = s.all.rows();

  Vector align, uniform;
  Matrix g;
  Matrix logits = s.all * s.all.transpose();
  logits /= batch.tau;
  anchor_terms(std::move(logits), s.m, align, uniform, &g);

  // dL/dlogits(a, j) = (softmax_{j != a}(a, j) - [j == pos(a)]) / n
  for (Eigen::Index a = 0; a < n; ++a) g(a, positive_of(a, s.m)) -= 1.0;
  g /= static_cast<double>(n);
  Matrix grad = g * s.all;
  grad.noalias() += g.transpose() * s.all;
  grad /= batch.tau;

  ContrastiveResult out;
  out.loss = (align + uniform).mean();
  out.grad_view1 = grad.topRows(s.m);
  out.grad_view2 = grad.bottomRows(s.m);
  return out;
}

LossDecomposition decompose_loss(const ContrastiveBatch& batch) {
  const Stacked s = stack_views(batch);
  Matrix logits = s.all * s.all.transpose();
  logits /= batch.tau;
  Vector align, uniform;
  anchor_terms(logits, s.m, align, uniform);
  return {align.mean(), uniform.mean()};
}

double mean_uniformity_score(const Matrix& embeddings) {
  return batch_scores(ScoreKind::Uniformity, embeddings, Matrix(), 1.0).mean();
}

// ---------------------------------------------------------------------------

namespace {

// Views for one contrastive side: shift-major copies when shifts are on,
// otherwise a single weak view per sample.
Matrix make_views(const Matrix& xs, const AugmentSuite& aug, bool use_shifts, Rng& rng) {
  if (use_shifts) return aug.expand_train_views(xs, rng);
  Matrix out(xs.rows(), xs.cols());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    out.row(i) = weak_augment(xs.row(i).transpose(), aug.weak, rng).transpose();
  }
  return out;
}

std::vector<std::size_t> shift_ids(Eigen::Index samples, std::size_t shifts) {
  std::vector<std::size_t> ids;
  ids.reserve(static_cast<std::size_t>(samples) * shifts);
  for (std::size_t k = 0; k < shifts; ++k) {
    for (Eigen::Index i = 0; i < samples; ++i) ids.push_back(k);
  }
  return ids;
}

struct StepOutput {
  double contrastive = 0.0;
  double shift = 0.0;
  double shift_accuracy = 0.0;
  EncoderParams grad;
};

StepOutput contrastive_step(const EncoderParams& params, const Matrix& v1, const Matrix& v2, std::size_t samples,
                            const AugmentSuite& aug, const PretrainConfig& cfg, bool want_grad) {
  const Eigen::Index half = v1.rows();
  Matrix both(2 * half, v1.cols());
  both.topRows(half) = v1;
  both.bottomRows(half) = v2;
  const ForwardCache cache = forward(params, both);

  ContrastiveBatch batch{cache.embedding.topRows(half), cache.embedding.bottomRows(half), cfg.tau};
  const ContrastiveResult cl = contrastive_loss(batch);
  if (cfg.check_decomposition) {
    const LossDecomposition d = decompose_loss(batch);
    if (std::abs(d.align + d.uniform - cl.loss) >= 1e-12 * std::max(1.0, std::abs(cl.loss))) {
      throw NumericError("contrastive loss decomposition identity violated");
    }
  }

  StepOutput out;
  out.contrastive = cl.loss;
  Matrix grad_emb(2 * half, cache.embedding.cols());
  grad_emb.topRows(half) = cl.grad_view1;
  grad_emb.bottomRows(half) = cl.grad_view2;

  Matrix grad_logits;
  if (cfg.use_shifts) {
    const Matrix logits = shift_logits(params, cache);
    auto ids = shift_ids(static_cast<Eigen::Index>(samples), aug.shift_count());
    const auto second = ids;
    ids.insert(ids.end(), second.begin(), second.end());
    const ShiftLoss sl = loss_shift(logits, ids);
    out.shift = sl.value;
    out.shift_accuracy = sl.accuracy;
    grad_logits = sl.grad_logits * cfg.shift_loss_weight;
  }
  if (want_grad) out.grad = backward(params, cache, grad_emb, cfg.use_shifts ? &grad_logits : nullptr);
  return out;
}

}  // namespace

PretrainResult pretrain_loop(const Dataset& train, EncoderParams encoder, const AugmentSuite& aug,
                             const PretrainConfig& config, const PretrainObserver& observer) {
  const Dataset pool = train.without_anomalies();
  if (pool.empty()) throw ValidationError("pre-training needs a nonempty unlabeled/normal pool");
  if (config.batch_size < 1) throw ValidationError("pretrain batch size must be >= 1");
  if (config.use_shifts && aug.shift_count() < 2) {
    throw ValidationError("shift-augmented pre-training needs at least 2 shifts");
  }
  const auto start_time = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  };

  Rng rng(config.seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Fixed probe batch with frozen augmentation draws.
  std::vector<std::size_t> probe_rows = order;
  std::shuffle(probe_rows.begin(), probe_rows.end(), rng);
  probe_rows.resize(std::min(config.probe_size, probe_rows.size()));
  const Dataset probe = pool.subset(probe_rows);
  Rng probe_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const Matrix probe_v1 = make_views(probe.features, aug, config.use_shifts, probe_rng);
  const Matrix probe_v2 = make_views(probe.features, aug, config.use_shifts, probe_rng);
  const bool probe_contrastive = probe.size() >= 2 || config.use_shifts;

  auto record = [&](std::size_t epoch, double train_cl, double train_shift) {
    PretrainEpochRecord r;
    r.epoch = epoch;
    r.train_contrastive = train_cl;
    r.train_shift = train_shift;
    if (probe_contrastive) {
      const StepOutput s = contrastive_step(encoder, probe_v1, probe_v2, probe.size(), aug, config, false);
      r.probe_contrastive = s.contrastive;
      r.probe_shift_accuracy = s.shift_accuracy;
    }
    if (probe.size() >= 2) r.probe_uniformity = mean_uniformity_score(embed(encoder, probe.features));
    r.wallclock_seconds = elapsed();
    return r;
  };

  PretrainResult result;
  result.trace.push_back(record(0, 0.0, 0.0));
  if (observer) observer(result.trace.back());

  SgdMomentum opt(config.lr, config.momentum);
  std::vector<bool> seen(pool.size(), false);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum_cl = 0.0;
    double sum_shift = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      if (rows.size() < 2 && !config.use_shifts) continue;
      const Dataset batch = pool.subset(rows);
      for (std::size_t r : rows) seen[r] = true;
      const Matrix v1 = make_views(batch.features, aug, config.use_shifts, rng);
      const Matrix v2 = make_views(batch.features, aug, config.use_shifts, rng);
      StepOutput step = contrastive_step(encoder, v1, v2, batch.size(), aug, config, true);
      opt.step(encoder.flat(), step.grad.flat());
      sum_cl += step.contrastive;
      sum_shift += step.shift;
      ++batches;
    }
    const double denom = batches == 0 ? 1.0 : static_cast<double>(batches);
    result.trace.push_back(record(epoch, sum_cl / denom, sum_shift / denom));
    if (observer) observer(result.trace.back());
  }

  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (seen[i]) result.seen_ids.push_back(pool.ids[i]);
  }
  result.encoder = std::move(encoder);
  return result;
}

double shift_accuracy(const EncoderParams& encoder, const Matrix& xs, const AugmentSuite& aug, Rng& rng) {
  const Matrix views = aug.expand_train_views(xs, rng);
  const Matrix logits = shift_logits(encoder, forward(encoder, views));
  const auto ids = shift_ids(xs.rows(), aug.shift_count());
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == ids[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace elsa
