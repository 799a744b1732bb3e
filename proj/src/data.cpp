#include "elsa/data.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <set>

namespace elsa {

int to_wire(SemiLabel s) { return static_cast<int>(s); }

SemiLabel semi_from_wire(int wire) {
  switch (wire) {
    case 0: return SemiLabel::Unlabeled;
    case 1: return SemiLabel::LabeledNormal;
    case -1: return SemiLabel::LabeledAnomaly;
    default: throw ValidationError("invalid semi label " + std::to_string(wire));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.semi.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(rows[i]));
    out.semi.push_back(semi[rows[i]]);
    out.ids.push_back(ids[rows[i]]);
  }
  return out;
}

Dataset Dataset::without_anomalies() const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < size(); ++i) {
    if (semi[i] != SemiLabel::LabeledAnomaly) keep.push_back(i);
  }
  return subset(keep);
}

std::size_t Dataset::count(SemiLabel s) const {
  return static_cast<std::size_t>(std::count(semi.begin(), semi.end(), s));
}

std::vector<int> normal_indicator(const GroundTruth& truth, int normal_class) {
  std::vector<int> out;
  out.reserve(truth.true_class.size());
  for (int c : truth.true_class) out.push_back(c == normal_class ? 1 : 0);
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (input_dim == 0) throw ValidationError("input_dim must be positive");
  if (normal_subcluster_count < 1) throw ValidationError("normal_subcluster_count must be >= 1");
  if (!(cluster_spread > 0.0)) throw ValidationError("cluster_spread must be positive");
  if (!(within_cluster_spread >= 0.0) || !(within_cluster_spread < cluster_spread)) {
    throw ValidationError("within_cluster_spread must lie in [0, cluster_spread)");
  }
  if (samples_per_class == 0) throw ValidationError("samples_per_class must be positive");
}

std::vector<int> Pool::classes() const {
  std::set<int> s(true_class.begin(), true_class.end());
  return {s.begin(), s.end()};
}

std::vector<std::size_t> Pool::indices_of(int cls) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < true_class.size(); ++i) {
    if (true_class[i] == cls) out.push_back(i);
  }
  return out;
}

namespace {

constexpr int kMeanPlacementAttempts = 1000;

double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

Vector draw_mean(std::mt19937_64& rng, const SyntheticSpec& spec, const std::vector<Vector>& placed) {
  std::normal_distribution<double> normal(0.0, spec.cluster_spread);
  const double min_dist = 2.0 * spec.cluster_spread;
  for (int attempt = 0; attempt < kMeanPlacementAttempts; ++attempt) {
    Vector m(static_cast<Eigen::Index>(spec.input_dim));
    for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = spec.mean_offset + normal(rng);
    const bool ok = std::all_of(placed.begin(), placed.end(),
                                [&](const Vector& p) { return (p - m).norm() >= min_dist; });
    if (ok) return m;
  }
  throw ValidationError("could not place class means at pairwise distance >= 2*cluster_spread");
}

}  // namespace

SyntheticPool generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticPool out;
  std::vector<Vector> placed;
  for (std::size_t s = 0; s < spec.normal_subcluster_count; ++s) {
    placed.push_back(draw_mean(rng, spec, placed));
    out.normal_means.push_back(placed.back());
  }
  for (std::size_t a = 0; a < spec.anomaly_class_count; ++a) {
    placed.push_back(draw_mean(rng, spec, placed));
    out.anomaly_means.push_back(placed.back());
  }

  const std::size_t classes = 1 + spec.anomaly_class_count;
  const std::size_t n = classes * spec.samples_per_class;
  Pool& pool = out.pool;
  pool.normal_class = spec.first_class_id;
  pool.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.input_dim));
  pool.true_class.reserve(n);
  pool.subcluster.reserve(n);

  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::Index row = 0;
  auto emit = [&](const Vector& mean, int cls, int sub) {
    for (Eigen::Index j = 0; j < mean.size(); ++j) {
      pool.features(row, j) = round_to_float(mean(j) + spec.within_cluster_spread * noise(rng));
    }
    pool.true_class.push_back(cls);
    pool.subcluster.push_back(sub);
    ++row;
  };
  const std::size_t subs = spec.normal_subcluster_count;
  for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
    const std::size_t sub = i % subs;
    emit(out.normal_means[sub], spec.first_class_id, static_cast<int>(sub));
  }
  for (std::size_t a = 0; a < spec.anomaly_class_count; ++a) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      emit(out.anomaly_means[a], spec.first_class_id + 1 + static_cast<int>(a), -1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::S1: return "s1";
    case Scenario::S2: return "s2";
    case Scenario::S3: return "s3";
  }
  return "s1";
}

Scenario scenario_from_string(const std::string& name) {
  if (name == "s1" || name == "S1") return Scenario::S1;
  if (name == "s2" || name == "S2") return Scenario::S2;
  if (name == "s3" || name == "S3") return Scenario::S3;
  throw ValidationError("unknown scenario '" + name + "' (expected s1, s2 or s3)");
}

namespace {

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

// Per-class queues of not-yet-used pool rows, consumed front to back.
using ClassQueues = std::map<int, std::vector<std::size_t>>;

std::vector<std::size_t> take(std::vector<std::size_t>& queue, std::size_t n, const std::string& what) {
  if (queue.size() < n) throw ValidationError("not enough samples for " + what);
  std::vector<std::size_t> out(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(n));
  queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

// Evenly over classes; the remainder goes round-robin by ascending class id.
std::vector<std::size_t> take_even(ClassQueues& queues, const std::vector<int>& classes, std::size_t n,
                                   const std::string& what) {
  std::vector<std::size_t> out;
  if (n == 0) return out;
  if (classes.empty()) throw ValidationError("empty anomaly pool for " + what);
  const std::size_t base = n / classes.size();
  const std::size_t extra = n % classes.size();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto part = take(queues[classes[c]], base + (c < extra ? 1 : 0), what);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

struct Row {
  const Pool* pool;
  std::size_t index;
  SemiLabel semi;
};

LabeledDataset assemble(const std::vector<Row>& rows, std::size_t dim) {
  LabeledDataset out;
  out.data.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    out.data.features.row(static_cast<Eigen::Index>(i)) = r.pool->features.row(static_cast<Eigen::Index>(r.index));
    out.data.semi.push_back(r.semi);
    out.data.ids.push_back(r.pool->id_offset + static_cast<std::int64_t>(r.index));
    out.truth.true_class.push_back(r.pool->true_class[r.index]);
  }
  return out;
}

}  // namespace

ScenarioSplits build_scenario(const Pool& pool, const ScenarioConfig& config, const Pool* auxiliary) {
  const auto all_classes = pool.classes();
  if (all_classes.size() < 2) throw ValidationError("pool needs at least 2 classes");
  auto in_unit = [](double g) { return g >= 0.0 && g <= 1.0; };
  if (!in_unit(config.gamma_l)) throw ValidationError("gamma_l must lie in [0,1]");
  if (!in_unit(config.gamma_p) || config.gamma_p >= 1.0) throw ValidationError("gamma_p must lie in [0,1)");
  if (config.scenario == Scenario::S1 && config.gamma_p > 0.0) {
    throw ValidationError("scenario s1 forbids pollution (gamma_p > 0)");
  }
  if (config.scenario == Scenario::S3 && auxiliary == nullptr) {
    throw ValidationError("scenario s3 requires an auxiliary anomaly pool");
  }
  if (auxiliary != nullptr && auxiliary->dim() != pool.dim()) {
    throw ValidationError("auxiliary pool dimension differs from the main pool");
  }

  std::vector<int> anomaly_classes = config.anomaly_classes;
  if (anomaly_classes.empty()) {
    for (int c : all_classes) {
      if (c != pool.normal_class) anomaly_classes.push_back(c);
    }
  }
  std::sort(anomaly_classes.begin(), anomaly_classes.end());

  std::mt19937_64 rng(config.seed);
  ClassQueues train_q;
  ClassQueues test_q;
  for (int c : all_classes) {
    auto idx = pool.indices_of(c);
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = round_count(config.test_fraction * static_cast<double>(idx.size()));
    test_q[c] = take(idx, n_test, "test split");
    train_q[c] = std::move(idx);
  }

  std::vector<std::size_t>& normals = train_q[pool.normal_class];
  const double labeled = config.gamma_l * static_cast<double>(normals.size());
  if (config.gamma_l > 0.0 && labeled < 1.0) {
    throw ValidationError("gamma_l * |normal| must be >= 1 when gamma_l > 0");
  }
  const std::size_t n_labeled = round_count(labeled);
  const auto labeled_normal = take(normals, n_labeled, "labeled normals");
  const auto unlabeled_normal = take(normals, normals.size(), "unlabeled normals");

  std::vector<Row> anomalies_labeled;
  if (config.scenario == Scenario::S3) {
    ClassQueues aux_q;
    std::vector<int> aux_classes;
    for (int c : auxiliary->classes()) {
      if (c == auxiliary->normal_class) continue;
      auto idx = auxiliary->indices_of(c);
      std::shuffle(idx.begin(), idx.end(), rng);
      aux_q[c] = std::move(idx);
      aux_classes.push_back(c);
    }
    for (std::size_t i : take_even(aux_q, aux_classes, n_labeled, "auxiliary labeled anomalies")) {
      anomalies_labeled.push_back({auxiliary, i, SemiLabel::LabeledAnomaly});
    }
  } else {
    for (std::size_t i : take_even(train_q, anomaly_classes, n_labeled, "labeled anomalies")) {
      anomalies_labeled.push_back({&pool, i, SemiLabel::LabeledAnomaly});
    }
  }

  std::vector<std::size_t> injected;
  if (config.scenario == Scenario::S2 && config.gamma_p > 0.0) {
    const double u = static_cast<double>(unlabeled_normal.size());
    const std::size_t n_inj = round_count(config.gamma_p * u / (1.0 - config.gamma_p));
    injected = take_even(train_q, anomaly_classes, n_inj, "contamination");
  }

  // Stratified 5/95 split of the unlabeled pool keeps the contamination ratio.
  const std::size_t n_unlabeled = unlabeled_normal.size() + injected.size();
  const std::size_t n_val = round_count(config.validation_fraction * static_cast<double>(n_unlabeled));
  const std::size_t n_val_anom =
      n_unlabeled == 0 ? 0
                       : round_count(static_cast<double>(n_val) * static_cast<double>(injected.size()) /
                                     static_cast<double>(n_unlabeled));
  auto shuffled_normal = unlabeled_normal;
  auto shuffled_injected = injected;
  std::shuffle(shuffled_normal.begin(), shuffled_normal.end(), rng);
  std::shuffle(shuffled_injected.begin(), shuffled_injected.end(), rng);

  std::vector<Row> validation_rows;
  std::vector<Row> train_rows;
  for (std::size_t i = 0; i < shuffled_injected.size(); ++i) {
    (i < n_val_anom ? validation_rows : train_rows).push_back({&pool, shuffled_injected[i], SemiLabel::Unlabeled});
  }
  for (std::size_t i = 0; i < shuffled_normal.size(); ++i) {
    (i < n_val - n_val_anom ? validation_rows : train_rows).push_back({&pool, shuffled_normal[i], SemiLabel::Unlabeled});
  }
  for (std::size_t i : labeled_normal) train_rows.push_back({&pool, i, SemiLabel::LabeledNormal});
  train_rows.insert(train_rows.end(), anomalies_labeled.begin(), anomalies_labeled.end());
  std::shuffle(train_rows.begin(), train_rows.end(), rng);
  std::shuffle(validation_rows.begin(), validation_rows.end(), rng);

  std::vector<Row> test_rows;
  for (std::size_t i : test_q[pool.normal_class]) test_rows.push_back({&pool, i, SemiLabel::Unlabeled});
  for (int c : anomaly_classes) {
    for (std::size_t i : test_q[c]) test_rows.push_back({&pool, i, SemiLabel::Unlabeled});
  }

  ScenarioSplits out;
  out.normal_class = pool.normal_class;
  out.train = assemble(train_rows, pool.dim());
  out.validation = assemble(validation_rows, pool.dim());
  out.test = assemble(test_rows, pool.dim());
  out.split_hash = hash_splits(out);
  return out;
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
};

void hash_labeled(Fnv1a& f, const LabeledDataset& ds) {
  f.value(ds.data.size());
  for (std::size_t i = 0; i < ds.data.size(); ++i) {
    f.value(ds.data.ids[i]);
    f.value(ds.data.semi[i]);
    f.value(ds.truth.true_class[i]);
  }
  f.bytes(ds.data.features.data(), static_cast<std::size_t>(ds.data.features.size()) * sizeof(double));
}

}  // namespace

std::uint64_t hash_splits(const ScenarioSplits& splits) {
  Fnv1a f;
  hash_labeled(f, splits.train);
  hash_labeled(f, splits.validation);
  hash_labeled(f, splits.test);
  return f.h;
}

}  // namespace elsa
