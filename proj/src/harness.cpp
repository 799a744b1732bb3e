#include "elsa/harness.hpp"

#include "elsa/errors.hpp"
#include "elsa/metrics.hpp"
#include "elsa/optim.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

namespace elsa {

namespace {

// derive_seed streams
enum Stream : std::uint64_t {
  kDataStream = 1,
  kAuxStream,
  kSplitStream,
  kInitStream,
  kPretrainStream,
  kClusterStream,
  kFinetuneStream,
  kEarlystopStream,
  kMonitorStream,
  kTestStream,
  kBaselineStream,
  kRefreshStream,
};

constexpr std::int64_t kAuxIdOffset = 1'000'000'000;
constexpr int kAuxFirstClass = 1000;
// Seed index s of a scenario or ablation grid runs under derive_seed(seed, kGridSeedStream + s),
// so the two drivers see the same data for the same index.
constexpr std::uint64_t kGridSeedStream = 100;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs fn(i) for i in [0, n) on up to `workers` threads and rethrows the
// lowest-index failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

double earlystop_score(const EncoderParams& encoder, const Matrix& prototypes, const Matrix& validation,
                       const AugmentSuite& aug, double tau, std::uint64_t seed) {
  const Eigen::Index n = validation.rows();
  if (n == 0) throw ValidationError("early stopping needs a nonempty validation set");
  Rng rng(seed);
  Matrix originals(n, validation.cols());
  Matrix distorted(n, validation.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = validation.row(i).transpose();
    originals.row(i) = weak_augment(x, aug.weak, rng).transpose();
    distorted.row(i) = weak_augment(strong_augment(x, aug.strong, rng), aug.weak, rng).transpose();
  }
  const auto ks = static_cast<Eigen::Index>(aug.shift_count());
  std::vector<double> scores(static_cast<std::size_t>(2 * n), 0.0);
  std::vector<int> labels(static_cast<std::size_t>(2 * n), 0);
  for (Eigen::Index k = 0; k < ks; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    const Vector a = row_logsumexp(embed(encoder, aug.shifts.apply_rows(originals, kk)) * prototypes.transpose() / tau);
    const Vector b = row_logsumexp(embed(encoder, aug.shifts.apply_rows(distorted, kk)) * prototypes.transpose() / tau);
    for (Eigen::Index i = 0; i < n; ++i) {
      scores[static_cast<std::size_t>(i)] += a(i);
      scores[static_cast<std::size_t>(n + i)] += b(i);
    }
  }
  std::fill(labels.begin(), labels.begin() + n, 1);
  return auroc(scores, labels);
}

// ---------------------------------------------------------------------------

const MetricsRecord& FinetuneResult::best() const {
  for (const auto& r : trace) {
    if (r.epoch == best_epoch) return r;
  }
  throw ValidationError("best epoch missing from the trace");
}

FinetuneResult finetune_loop(const Dataset& train, const Matrix& validation, const Matrix& cluster_pool,
                             EncoderParams encoder, PrototypeSet prototypes, const AugmentSuite& aug,
                             const FinetuneConfig& cfg, const TestMonitor& monitor, const EpochObserver& observer) {
  if (train.empty()) throw ValidationError("fine-tuning needs a nonempty training set");
  if (prototypes.k() == 0) throw ValidationError("fine-tuning needs fitted prototypes");
  if (cfg.batch_size < 1) throw ValidationError("fine-tune batch size must be >= 1");
  if (cfg.use_shifts && aug.shift_count() < 2) throw ValidationError("shift loss needs at least 2 shifts");
  if (cfg.refresh_period < 1) throw ValidationError("refresh period must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t ks = aug.shift_count();

  auto record = [&](std::size_t epoch, const LossBreakdown& loss, bool refreshed) {
    MetricsRecord r;
    r.epoch = epoch;
    r.loss = loss;
    r.prototype_refreshed = refreshed;
    r.earlystop_auroc = earlystop_score(encoder, prototypes.vectors, validation, aug, cfg.tau, cfg.earlystop_seed);
    if (monitor) r.test_auroc = monitor(encoder, prototypes.vectors);
    const Vector s = row_logsumexp(embed(encoder, train.features) * prototypes.vectors.transpose() / cfg.tau);
    double sums[3] = {0.0, 0.0, 0.0};
    std::size_t counts[3] = {0, 0, 0};
    for (std::size_t i = 0; i < train.size(); ++i) {
      const int slot = train.semi[i] == SemiLabel::LabeledAnomaly ? 0 : train.semi[i] == SemiLabel::LabeledNormal ? 1 : 2;
      sums[slot] += s(static_cast<Eigen::Index>(i));
      ++counts[slot];
    }
    auto avg = [&](int slot) { return counts[slot] == 0 ? 0.0 : sums[slot] / static_cast<double>(counts[slot]); };
    r.mean_score_labeled_anomaly = avg(0);
    r.mean_score_labeled_normal = avg(1);
    r.mean_score_unlabeled = avg(2);
    r.wallclock_seconds = seconds_since(t0);
    return r;
  };

  FinetuneResult result;
  result.trace.push_back(record(0, LossBreakdown{}, false));
  if (observer) observer(result.trace.back());
  double best_score = result.trace.back().earlystop_auroc;
  result.best_epoch = 0;
  result.best_encoder = encoder;
  result.best_prototypes = prototypes;

  Rng rng(cfg.seed);
  Adam opt(cfg.lr);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const std::span<const std::size_t> rows(order.data() + start, end - start);
        const Dataset batch = train.subset(rows);
        const auto b = static_cast<Eigen::Index>(batch.size());

        // Two weak draws, each expanded over every shift: 2 * ks * b rows.
        const Matrix v1 = aug.expand_train_views(batch.features, rng);
        const Matrix v2 = aug.expand_train_views(batch.features, rng);
        Matrix views(v1.rows() + v2.rows(), v1.cols());
        views.topRows(v1.rows()) = v1;
        views.bottomRows(v2.rows()) = v2;
        std::vector<SemiLabel> semis(static_cast<std::size_t>(views.rows()));
        std::vector<std::size_t> shift_ids(semis.size());
        for (Eigen::Index r = 0; r < views.rows(); ++r) {
          semis[static_cast<std::size_t>(r)] = batch.semi[static_cast<std::size_t>(r % b)];
          shift_ids[static_cast<std::size_t>(r)] = static_cast<std::size_t>(r / b) % ks;
        }

        const ForwardCache cache = forward(encoder, views);
        const Vector scores = batch_scores(cfg.score, cache.embedding, prototypes.vectors, cfg.tau);
        const double C = training_constant(cfg.score, prototypes.k(), cfg.tau, semis.size(), cfg.c_mode);
        const std::span<const double> score_span(scores.data(), static_cast<std::size_t>(scores.size()));
        ScoreLoss loss = apply_loss(cfg.loss, score_span, semis, C, cfg.check_domain);
        const Matrix grad_emb =
            batch_scores_backward(cfg.score, cache.embedding, prototypes.vectors, cfg.tau, loss.grad_scores);

        Matrix grad_logits;
        if (cfg.use_shifts) {
          const ShiftLoss sl = loss_shift(shift_logits(encoder, cache), shift_ids);
          loss.breakdown.shift_term = sl.value;
          loss.breakdown.total += cfg.shift_loss_weight * sl.value;
          grad_logits = sl.grad_logits * cfg.shift_loss_weight;
        }
        const EncoderParams grad = backward(encoder, cache, grad_emb, cfg.use_shifts ? &grad_logits : nullptr);
        if (!grad.flat().allFinite()) throw NumericError("non-finite gradient");
        opt.step(encoder.flat(), grad.flat());

        sum.total += loss.breakdown.total;
        sum.anomaly_term += loss.breakdown.anomaly_term;
        sum.normal_term += loss.breakdown.normal_term;
        sum.shift_term += loss.breakdown.shift_term;
        ++batches;
      }
      if (!encoder.flat().allFinite()) throw NumericError("non-finite parameters");
    } catch (const NumericError& e) {
      result.aborted = true;
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      break;
    }

    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    sum.total /= nb;
    sum.anomaly_term /= nb;
    sum.normal_term /= nb;
    sum.shift_term /= nb;

    bool refreshed = false;
    const int e = static_cast<int>(epoch);
    if (e - prototypes.last_refresh_epoch >= cfg.refresh_period) {
      try {
        prototypes = refresh_prototypes(prototypes, embed(encoder, cluster_views(cluster_pool, aug)), e,
                                        cfg.refresh_period, derive_seed(cfg.seed, kRefreshStream + epoch),
                                        cfg.cold_refresh);
        refreshed = true;
      } catch (const NumericError& err) {
        result.aborted = true;
        result.abort_reason = "epoch " + std::to_string(epoch) + " refresh: " + err.what();
        break;
      }
    }

    result.trace.push_back(record(epoch, sum, refreshed));
    if (observer) observer(result.trace.back());
    if (result.trace.back().earlystop_auroc > best_score) {
      best_score = result.trace.back().earlystop_auroc;
      result.best_epoch = epoch;
      result.best_encoder = encoder;
      result.best_prototypes = prototypes;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

AugmentSuite make_augment_suite(const RunConfig& cfg, double data_std) {
  const std::size_t d = cfg.data.input_dim;
  const std::size_t ks = cfg.effective_shift_count();
  ShiftFamily shifts = ks == 1                        ? ShiftFamily::identity(d)
                       : cfg.shift_kind == "planar" ? ShiftFamily::planar(d, ks)
                                                    : ShiftFamily::random(d, ks, cfg.shift_seed);
  WeakAugConfig weak;
  weak.noise_sigma = cfg.weak_noise_rel * data_std;
  weak.mask_fraction = cfg.weak_mask_fraction;
  weak.jitter_lo = cfg.weak_jitter_lo;
  weak.jitter_hi = cfg.weak_jitter_hi;
  weak.validate();
  StrongAugConfig strong;
  strong.n_ops = cfg.strong_n_ops;
  strong.apply_probability = cfg.strong_apply_probability;
  strong.noise_sigma = cfg.strong_noise_rel * data_std;
  strong.permute_fraction = cfg.strong_permute_fraction;
  strong.flip_fraction = cfg.strong_flip_fraction;
  strong.validate(weak);
  return AugmentSuite{std::move(shifts), weak, strong};
}

ScenarioSplits make_splits(const RunConfig& cfg) {
  SyntheticSpec spec = cfg.data;
  spec.seed = derive_seed(cfg.seed, kDataStream);
  const Pool pool = generate(spec).pool;

  ScenarioConfig sc;
  sc.scenario = cfg.scenario;
  sc.gamma_l = cfg.gamma_l;
  sc.gamma_p = cfg.gamma_p;
  sc.seed = derive_seed(cfg.seed, kSplitStream);
  sc.test_fraction = cfg.test_fraction;
  sc.validation_fraction = cfg.validation_fraction;
  sc.anomaly_classes = cfg.anomaly_classes;

  if (cfg.scenario != Scenario::S3) return build_scenario(pool, sc);
  SyntheticSpec aux_spec = cfg.data;
  aux_spec.seed = derive_seed(cfg.seed, kAuxStream);
  aux_spec.mean_offset = cfg.aux_mean_offset;
  aux_spec.anomaly_class_count = cfg.aux_class_count;
  aux_spec.first_class_id = kAuxFirstClass;
  Pool aux = generate(aux_spec).pool;
  aux.id_offset = kAuxIdOffset;
  return build_scenario(pool, sc, &aux);
}

Matrix cluster_views(const Matrix& xs, const AugmentSuite& aug) {
  const std::size_t ks = aug.shift_count();
  if (ks == 1) return xs;
  Matrix out(xs.rows() * static_cast<Eigen::Index>(ks), xs.cols());
  for (std::size_t k = 0; k < ks; ++k) {
    out.middleRows(static_cast<Eigen::Index>(k) * xs.rows(), xs.rows()) = aug.shifts.apply_rows(xs, k);
  }
  return out;
}

namespace {

EncoderDims encoder_dims(const RunConfig& cfg, std::size_t shifts) {
  EncoderDims dims;
  dims.input = cfg.data.input_dim;
  dims.hidden = cfg.hidden;
  dims.embed = cfg.embed;
  dims.shifts = shifts;
  return dims;
}

void attach_splits(PreparedRun& run, const RunConfig& cfg, ScenarioSplits splits, double data_std) {
  if (splits.train.data.dim() != cfg.data.input_dim) {
    throw ValidationError("data has " + std::to_string(splits.train.data.dim()) + " features but the config says " +
                          std::to_string(cfg.data.input_dim));
  }
  run.config = cfg;
  run.splits = std::move(splits);
  run.cluster_pool = run.splits.train.data.without_anomalies().features;
  run.data_std = data_std;
  run.aug = make_augment_suite(cfg, data_std);
}

}  // namespace

PreparedRun prepare_from_splits(const RunConfig& cfg, ScenarioSplits splits, const PretrainObserver& observer) {
  cfg.validate();
  PreparedRun run;
  const double data_std = feature_std(splits.train.data.without_anomalies().features);
  attach_splits(run, cfg, std::move(splits), data_std);

  EncoderParams encoder = init_encoder(encoder_dims(cfg, run.aug.shift_count()), derive_seed(cfg.seed, kInitStream));
  PretrainConfig pc;
  pc.epochs = cfg.pretrain_epochs;
  pc.batch_size = cfg.pretrain_batch;
  pc.lr = cfg.pretrain_lr;
  pc.momentum = cfg.pretrain_momentum;
  pc.tau = cfg.tau;
  pc.use_shifts = cfg.use_shifts();
  pc.shift_loss_weight = cfg.shift_loss_weight;
  pc.seed = derive_seed(cfg.seed, kPretrainStream);
  run.pretrain = pretrain_loop(run.splits.train.data, std::move(encoder), run.aug, pc, observer);

  run.prototypes = fit_prototypes(embed(run.pretrain.encoder, cluster_views(run.cluster_pool, run.aug)),
                                  cfg.prototype_count, derive_seed(cfg.seed, kClusterStream));
  run.prototypes.last_refresh_epoch = 0;
  return run;
}

PreparedRun prepare_run(const RunConfig& cfg, const PretrainObserver& observer) {
  cfg.validate();
  return prepare_from_splits(cfg, make_splits(cfg), observer);
}

PreparedRun resume_run(const RunConfig& cfg, ScenarioSplits splits, EncoderParams encoder, PrototypeSet prototypes,
                       double data_std) {
  cfg.validate();
  PreparedRun run;
  attach_splits(run, cfg, std::move(splits), data_std);
  if (!(encoder.dims() == encoder_dims(cfg, run.aug.shift_count()))) {
    throw ValidationError("encoder shape does not match the config");
  }
  run.pretrain.encoder = std::move(encoder);
  run.prototypes = std::move(prototypes);
  run.prototypes.last_refresh_epoch = 0;
  return run;
}

double test_auroc(const PreparedRun& prepared, const EncoderParams& encoder, const Matrix& prototypes,
                  const RunConfig& cfg, std::size_t samples, std::uint64_t seed) {
  EnsembleConfig ec;
  ec.n_samples = samples;
  ec.mode = cfg.ensemble_mode;
  ec.score = cfg.score;
  ec.tau = cfg.effective_score_tau();
  Matrix reference;
  if (cfg.score == ScoreKind::Uniformity) reference = embed(encoder, cluster_views(prepared.cluster_pool, prepared.aug));
  Rng rng(seed);
  const Vector s = score_ensemble(prepared.splits.test.data.features, encoder, prototypes, prepared.aug, ec, rng,
                                  cfg.score == ScoreKind::Uniformity ? &reference : nullptr);
  const auto labels = normal_indicator(prepared.splits.test.truth, prepared.splits.normal_class);
  return auroc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), labels);
}

double baseline_auroc(const PreparedRun& prepared) {
  const RunConfig& cfg = prepared.config;
  const AugmentSuite plain{ShiftFamily::identity(cfg.data.input_dim), prepared.aug.weak, prepared.aug.strong};
  EnsembleConfig ec;
  ec.n_samples = cfg.ensemble_samples;
  ec.mode = EnsembleMode::ScoreAverage;
  ec.score = ScoreKind::Uniformity;
  ec.tau = cfg.tau;
  const Matrix reference = embed(prepared.pretrain.encoder, prepared.cluster_pool);
  Rng rng(derive_seed(cfg.seed, kBaselineStream));
  const Vector s = score_ensemble(prepared.splits.test.data.features, prepared.pretrain.encoder, Matrix(), plain, ec,
                                  rng, &reference);
  const auto labels = normal_indicator(prepared.splits.test.truth, prepared.splits.normal_class);
  return auroc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), labels);
}

PipelineResult finish_run(const PreparedRun& prepared, const RunConfig& cfg, const EpochObserver& observer) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  PrototypeSet prototypes = prepared.prototypes;
  if (cfg.prototype_count != prototypes.k()) {
    prototypes = fit_prototypes(embed(prepared.pretrain.encoder, cluster_views(prepared.cluster_pool, prepared.aug)),
                                cfg.prototype_count, derive_seed(cfg.seed, kClusterStream));
  }

  FinetuneConfig fc;
  fc.epochs = cfg.finetune_epochs;
  fc.batch_size = cfg.finetune_batch;
  fc.lr = cfg.finetune_lr;
  fc.tau = cfg.tau;
  fc.c_mode = cfg.c_mode;
  fc.score = cfg.score;
  fc.loss = cfg.loss;
  fc.check_domain = cfg.enforce_positivity;
  fc.use_shifts = cfg.use_shifts();
  fc.shift_loss_weight = cfg.shift_loss_weight;
  fc.refresh_period = cfg.effective_refresh_period();
  fc.cold_refresh = cfg.cold_refresh;
  fc.seed = derive_seed(cfg.seed, kFinetuneStream);
  fc.earlystop_seed = derive_seed(cfg.seed, kEarlystopStream);

  const std::uint64_t monitor_seed = derive_seed(cfg.seed, kMonitorStream);
  const TestMonitor monitor = [&](const EncoderParams& enc, const Matrix& protos) {
    return test_auroc(prepared, enc, protos, cfg, cfg.monitor_samples, monitor_seed);
  };

  PipelineResult out;
  out.config = cfg;
  out.split_hash = prepared.splits.split_hash;
  out.pretrain_trace = prepared.pretrain.trace;
  out.finetune = finetune_loop(prepared.splits.train.data, prepared.splits.validation.data.features,
                               prepared.cluster_pool, prepared.pretrain.encoder, std::move(prototypes), prepared.aug,
                               fc, monitor, observer);
  out.test_auroc = test_auroc(prepared, out.finetune.best_encoder, out.finetune.best_prototypes.vectors, cfg,
                              cfg.ensemble_samples, derive_seed(cfg.seed, kTestStream));
  out.baseline_auroc = baseline_auroc(prepared);
  out.finetune_seconds = seconds_since(t0);
  return out;
}

PipelineResult run_pipeline(const RunConfig& cfg) { return finish_run(prepare_run(cfg), cfg); }

nlohmann::ordered_json to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss"] = {{"total", r.loss.total},
               {"anomaly", r.loss.anomaly_term},
               {"normal", r.loss.normal_term},
               {"shift", r.loss.shift_term}};
  j["earlystop_auroc"] = r.earlystop_auroc;
  j["test_auroc"] = r.test_auroc ? nlohmann::ordered_json(*r.test_auroc) : nlohmann::ordered_json(nullptr);
  j["prototype_refreshed"] = r.prototype_refreshed;
  j["mean_score"] = {{"labeled_anomaly", r.mean_score_labeled_anomaly},
                     {"labeled_normal", r.mean_score_labeled_normal},
                     {"unlabeled", r.mean_score_unlabeled}};
  j["wallclock"] = r.wallclock_seconds;
  return j;
}

nlohmann::ordered_json to_json(const PretrainEpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_contrastive"] = r.train_contrastive;
  j["train_shift"] = r.train_shift;
  j["probe_contrastive"] = r.probe_contrastive;
  j["probe_uniformity"] = r.probe_uniformity;
  j["probe_shift_accuracy"] = r.probe_shift_accuracy;
  j["wallclock"] = r.wallclock_seconds;
  return j;
}

// ---------------------------------------------------------------------------

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sem_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
}

std::vector<int> anomaly_mix(const SyntheticSpec& spec, std::size_t m, std::size_t mixes) {
  if (mixes == 0 || m >= mixes) throw ValidationError("anomaly mix index out of range");
  if (spec.anomaly_class_count < mixes) {
    throw ValidationError("cannot split " + std::to_string(spec.anomaly_class_count) + " anomaly classes into " +
                          std::to_string(mixes) + " mixes");
  }
  std::vector<int> out;
  for (std::size_t a = m; a < spec.anomaly_class_count; a += mixes) {
    out.push_back(spec.first_class_id + 1 + static_cast<int>(a));
  }
  return out;
}

namespace {

std::string dump_line(const nlohmann::ordered_json& j) { return j.dump(); }

std::string fmt(double x) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << x;
  return os.str();
}

}  // namespace

ScenarioReport run_scenario(const RunConfig& cfg, const GridSpec& grid) {
  if (grid.data_seeds == 0 || grid.anomaly_mixes == 0 || grid.gamma_p.empty()) {
    throw ValidationError("scenario grid must have at least one cell");
  }
  struct Cell {
    std::size_t row, seed, mix;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < grid.gamma_p.size(); ++r) {
    for (std::size_t s = 0; s < grid.data_seeds; ++s) {
      for (std::size_t m = 0; m < grid.anomaly_mixes; ++m) cells.push_back({r, s, m});
    }
  }
  auto cell_config = [&](const Cell& c) {
    RunConfig rc = cfg;
    rc.gamma_p = grid.gamma_p[c.row];
    rc.seed = derive_seed(cfg.seed, kGridSeedStream + c.seed);
    rc.anomaly_classes = grid.anomaly_mixes == 1 ? cfg.anomaly_classes : anomaly_mix(cfg.data, c.mix, grid.anomaly_mixes);
    rc.workers = 1;
    rc.validate();
    return rc;
  };
  for (const Cell& c : cells) cell_config(c);  // fail fast before any training

  std::vector<PipelineResult> results(cells.size());
  parallel_for(cells.size(), cfg.workers, [&](std::size_t i) { results[i] = run_pipeline(cell_config(cells[i])); });

  ScenarioReport report;
  report.rows.resize(grid.gamma_p.size());
  for (std::size_t r = 0; r < grid.gamma_p.size(); ++r) {
    report.rows[r].scenario = cfg.scenario;
    report.rows[r].gamma_l = cfg.gamma_l;
    report.rows[r].gamma_p = grid.gamma_p[r];
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& c = cells[i];
    const PipelineResult& res = results[i];
    for (const MetricsRecord& rec : res.finetune.trace) {
      nlohmann::ordered_json j;
      j["schema"] = 1;
      j["kind"] = "epoch";
      j["gamma_p"] = grid.gamma_p[c.row];
      j["seed_index"] = c.seed;
      j["mix"] = c.mix;
      const nlohmann::ordered_json fields = to_json(rec);
      for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
      report.jsonl.push_back(dump_line(j));
    }
    nlohmann::ordered_json j;
    j["schema"] = 1;
    j["kind"] = "cell";
    j["scenario"] = to_string(cfg.scenario);
    j["gamma_l"] = cfg.gamma_l;
    j["gamma_p"] = grid.gamma_p[c.row];
    j["seed_index"] = c.seed;
    j["mix"] = c.mix;
    j["anomaly_classes"] = res.config.anomaly_classes;
    j["split_hash"] = res.split_hash;
    j["best_epoch"] = res.finetune.best_epoch;
    j["aborted"] = res.finetune.aborted;
    j["test_auroc"] = res.test_auroc;
    j["baseline_auroc"] = res.baseline_auroc;
    report.jsonl.push_back(dump_line(j));
    report.rows[c.row].auroc.push_back(res.test_auroc);
    report.rows[c.row].baseline.push_back(res.baseline_auroc);
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "scenario,gamma_l,gamma_p,auroc,auroc_sem,baseline_auroc,baseline_sem,cells\n";
  for (ScenarioRow& row : report.rows) {
    row.mean = mean_of(row.auroc);
    row.sem = sem_of(row.auroc);
    row.baseline_mean = mean_of(row.baseline);
    row.baseline_sem = sem_of(row.baseline);
    rows.push_back({{"scenario", to_string(row.scenario)},
                    {"gamma_l", row.gamma_l},
                    {"gamma_p", row.gamma_p},
                    {"auroc_mean", row.mean},
                    {"auroc_sem", row.sem},
                    {"baseline_mean", row.baseline_mean},
                    {"baseline_sem", row.baseline_sem},
                    {"cells", row.auroc.size()}});
    csv << to_string(row.scenario) << ',' << row.gamma_l << ',' << row.gamma_p << ',' << fmt(row.mean) << ','
        << fmt(row.sem) << ',' << fmt(row.baseline_mean) << ',' << fmt(row.baseline_sem) << ','
        << row.auroc.size() << '\n';
  }
  report.summary["schema"] = 1;
  report.summary["config"] = to_json(cfg);
  report.summary["grid"] = {{"data_seeds", grid.data_seeds},
                            {"anomaly_mixes", grid.anomaly_mixes},
                            {"gamma_p", grid.gamma_p}};
  report.summary["rows"] = rows;
  report.csv = csv.str();
  return report;
}

std::vector<AblationEntry> default_ablation_matrix() {
  std::vector<AblationEntry> out;
  for (ScoreKind s : {ScoreKind::Energy, ScoreKind::Cosine, ScoreKind::Uniformity}) {
    for (LossKind l : {LossKind::Elsa, LossKind::Naive, LossKind::DeepSad}) out.push_back({s, l});
  }
  return out;
}

AblationReport run_ablation(const RunConfig& cfg, const std::vector<AblationEntry>& matrix, std::size_t seeds) {
  if (matrix.empty()) throw ValidationError("ablation matrix is empty");
  if (seeds == 0) throw ValidationError("ablation needs at least one seed");
  auto seed_config = [&](std::size_t s) {
    RunConfig rc = cfg;
    rc.seed = derive_seed(cfg.seed, kGridSeedStream + s);
    rc.workers = 1;
    return rc;
  };
  for (const AblationEntry& e : matrix) {
    RunConfig rc = seed_config(0);
    rc.score = e.score;
    rc.loss = e.loss;
    rc.validate();
  }

  // results[s][r]
  std::vector<std::vector<PipelineResult>> results(seeds, std::vector<PipelineResult>(matrix.size()));
  parallel_for(seeds, cfg.workers, [&](std::size_t s) {
    const RunConfig base = seed_config(s);
    const PreparedRun prepared = prepare_run(base);
    for (std::size_t r = 0; r < matrix.size(); ++r) {
      RunConfig rc = base;
      rc.score = matrix[r].score;
      rc.loss = matrix[r].loss;
      results[s][r] = finish_run(prepared, rc);
    }
  });

  AblationReport report;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::ostringstream csv;
  csv << "score,loss,auroc,auroc_sem,seeds\n";
  for (std::size_t r = 0; r < matrix.size(); ++r) {
    AblationRow row;
    row.entry = matrix[r];
    for (std::size_t s = 0; s < seeds; ++s) {
      const PipelineResult& res = results[s][r];
      row.auroc.push_back(res.test_auroc);
      row.split_hash.push_back(res.split_hash);
      nlohmann::ordered_json j;
      j["schema"] = 1;
      j["kind"] = "ablation_cell";
      j["score"] = to_string(matrix[r].score);
      j["loss"] = to_string(matrix[r].loss);
      j["seed_index"] = s;
      j["split_hash"] = res.split_hash;
      j["best_epoch"] = res.finetune.best_epoch;
      j["aborted"] = res.finetune.aborted;
      j["test_auroc"] = res.test_auroc;
      report.jsonl.push_back(dump_line(j));
    }
    row.mean = mean_of(row.auroc);
    row.sem = sem_of(row.auroc);
    rows.push_back({{"score", to_string(row.entry.score)},
                    {"loss", to_string(row.entry.loss)},
                    {"auroc_mean", row.mean},
                    {"auroc_sem", row.sem},
                    {"split_hashes", row.split_hash}});
    csv << to_string(row.entry.score) << ',' << to_string(row.entry.loss) << ',' << fmt(row.mean) << ','
        << fmt(row.sem) << ',' << seeds << '\n';
    report.rows.push_back(std::move(row));
  }
  report.summary["schema"] = 1;
  report.summary["config"] = to_json(cfg);
  report.summary["seeds"] = seeds;
  report.summary["rows"] = rows;
  report.csv = csv.str();
  return report;
}

}  // namespace elsa
