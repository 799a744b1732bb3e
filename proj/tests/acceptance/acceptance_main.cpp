// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance [--only 1,2,...]

#include "elsa/checkpoint.hpp"
#include "elsa/config.hpp"
#include "elsa/errors.hpp"
#include "elsa/harness.hpp"
#include "elsa/metrics.hpp"
#include "elsa/objective.hpp"
#include "elsa/pretrain.hpp"
#include "elsa/prototypes.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace elsa;

namespace {

// ---- bookkeeping ---------------------------------------------------------------

struct Budget {
  std::clock_t cpu0 = std::clock();
  std::chrono::steady_clock::time_point wall0 = std::chrono::steady_clock::now();
  double cpu() const { return static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC; }
  double wall() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  }
};

int g_failures = 0;

void report(int id, bool ok, double cpu_seconds, double limit_seconds, const std::string& detail) {
  const bool in_time = cpu_seconds < limit_seconds;
  if (!(ok && in_time)) ++g_failures;
  std::printf("CRITERION %2d %s  %s  [cpu %.1fs, limit %.0fs%s]\n", id, ok && in_time ? "PASS" : "FAIL",
              detail.c_str(), cpu_seconds, limit_seconds, in_time ? "" : ", OVER BUDGET");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& g) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(g);
  return m;
}

Matrix random_unit_rows(Eigen::Index r, Eigen::Index c, std::mt19937_64& g) {
  return normalize_rows(random_matrix(r, c, g));
}

// ---- 1 ---------------------------------------------------------------------------

void criterion1() {
  Budget b;
  std::mt19937_64 g(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    ContrastiveBatch batch;
    const auto m = static_cast<Eigen::Index>(2 + g() % 63);
    batch.view1 = random_unit_rows(m, 16, g);
    batch.view2 = random_unit_rows(m, 16, g);
    batch.tau = std::uniform_real_distribution<double>(0.1, 1.0)(g);
    const LossDecomposition d = decompose_loss(batch);
    worst = std::max(worst, std::abs(contrastive_loss(batch).loss - (d.align + d.uniform)));
  }
  report(1, worst < 1e-12, b.cpu(), 1.0, "max |L_c - (L_align + L_uniform)| = " + fmt("%.3g", worst) + " over 100 batches");
}

// ---- 2 ---------------------------------------------------------------------------

EncoderDims grad_dims() {
  EncoderDims d;
  d.input = 5;
  d.hidden = 6;
  d.embed = 4;
  d.shifts = 3;
  return d;
}

std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Loss over prototype scores of encoder embeddings, differentiated w.r.t.
// every encoder parameter (through the L2 normalization).
DifferentiableFn score_loss_through_encoder(LossKind kind, const EncoderParams& p0, const Matrix& xs,
                                            const Matrix& protos, const std::vector<SemiLabel>& semis, double tau) {
  const double C = training_constant(ScoreKind::Energy, static_cast<std::size_t>(protos.rows()), tau, 0);
  return [=](const Vector& flat, Vector* grad) {
    EncoderParams p = p0;
    p.flat() = flat;
    const ForwardCache c = forward(p, xs);
    const Vector s = batch_scores(ScoreKind::Energy, c.embedding, protos, tau);
    const ScoreLoss l = apply_loss(kind, span_of(s), semis, C);
    if (grad) {
      const Matrix ge = batch_scores_backward(ScoreKind::Energy, c.embedding, protos, tau, l.grad_scores);
      *grad = backward(p, c, ge).flat();
    }
    return l.breakdown.total;
  };
}

void criterion2() {
  Budget b;
  std::mt19937_64 g(202);
  const EncoderDims d = grad_dims();
  const EncoderParams p0 = init_encoder(d, 7);
  const Matrix x1 = random_matrix(4, 5, g), x2 = random_matrix(4, 5, g);
  const Matrix protos = random_unit_rows(16, 4, g);
  const std::vector<SemiLabel> semis{SemiLabel::LabeledAnomaly, SemiLabel::Unlabeled, SemiLabel::LabeledNormal,
                                     SemiLabel::Unlabeled};
  const double tau = 0.5;

  std::map<std::string, double> errors;
  errors["contrastive"] = grad_check(
                              [&](const Vector& flat, Vector* grad) {
                                EncoderParams p = p0;
                                p.flat() = flat;
                                const ForwardCache c1 = forward(p, x1), c2 = forward(p, x2);
                                const ContrastiveResult r = contrastive_loss({c1.embedding, c2.embedding, tau});
                                if (grad) *grad = backward(p, c1, r.grad_view1).flat() + backward(p, c2, r.grad_view2).flat();
                                return r.loss;
                              },
                              p0.flat())
                              .max_rel_error;
  errors["elsa"] = grad_check(score_loss_through_encoder(LossKind::Elsa, p0, x1, protos, semis, tau), p0.flat())
                       .max_rel_error;
  errors["naive"] = grad_check(score_loss_through_encoder(LossKind::Naive, p0, x1, protos, semis, tau), p0.flat())
                        .max_rel_error;
  errors["deepsad"] =
      grad_check(score_loss_through_encoder(LossKind::DeepSad, p0, x1, protos, semis, tau), p0.flat()).max_rel_error;
  const std::vector<std::size_t> ids{0, 1, 2, 1};
  errors["shift"] = grad_check(
                        [&](const Vector& flat, Vector* grad) {
                          EncoderParams p = p0;
                          p.flat() = flat;
                          const ForwardCache c = forward(p, x1);
                          const ShiftLoss sl = loss_shift(shift_logits(p, c), ids);
                          if (grad) *grad = backward(p, c, Matrix::Zero(4, 4), &sl.grad_logits).flat();
                          return sl.value;
                        },
                        p0.flat())
                        .max_rel_error;

  double worst = 0.0;
  std::string detail = "max rel error:";
  for (const auto& [name, e] : errors) {
    worst = std::max(worst, e);
    detail += " " + name + "=" + fmt("%.2g", e);
  }
  report(2, worst < 1e-5, b.cpu(), 30.0, detail);
}

// ---- 3 ---------------------------------------------------------------------------

double pair_count_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double credit = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      credit += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return credit / pairs;
}

void criterion3() {
  Budget b;
  std::mt19937_64 g(303);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + g() % 49;  // 2..50
    const bool coarse = t % 2 == 0;  // half the instances are tie-heavy
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::normal_distribution<double> nd;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? static_cast<double>(g() % 5) : nd(g);
      y[i] = static_cast<int>(g() % 2);
    }
    const std::size_t pos = g() % n;
    y[pos] = 1;
    y[(pos + 1 + g() % (n - 1)) % n] = 0;
    mismatches += auroc(s, y) != pair_count_auroc(s, y);
  }
  report(3, mismatches == 0, b.cpu(), 5.0, std::to_string(mismatches) + " mismatches in 1000 instances (n <= 50)");
}

// ---- 4 ---------------------------------------------------------------------------

void criterion4() {
  Budget b;
  std::mt19937_64 g(404);
  const double tau = 0.5;
  std::size_t out_of_bounds = 0, out_of_domain = 0, non_finite = 0;
  constexpr int kEmbeddings = 100000;
  constexpr int kPerSet = 100;
  std::vector<SemiLabel> semis(kPerSet);
  for (int set = 0; set < kEmbeddings / kPerSet; ++set) {
    const auto k = static_cast<Eigen::Index>(8 + g() % 120);  // ln k > 1/tau needs k >= 8
    const auto z = static_cast<Eigen::Index>(2 + g() % 31);
    const Matrix protos = random_unit_rows(k, z, g);
    const Matrix e = random_unit_rows(kPerSet, z, g);
    const Vector s = batch_scores(ScoreKind::Energy, e, protos, tau);
    const double lk = std::log(static_cast<double>(k));
    const double C = normalization_constant(static_cast<std::size_t>(k), tau);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      out_of_bounds += !(s(i) >= lk - 1.0 / tau && s(i) <= lk + 1.0 / tau);
      out_of_domain += !(s(i) > 0.0 && s(i) < C);
    }
    for (auto& l : semis) l = static_cast<SemiLabel>(static_cast<int>(g() % 3) - 1);
    const ScoreLoss l = loss_elsa(span_of(s), semis, C);
    non_finite += !(std::isfinite(l.breakdown.total) && l.grad_scores.allFinite());
  }
  report(4, out_of_bounds == 0 && out_of_domain == 0 && non_finite == 0, b.cpu(), 5.0,
         "1e5 embeddings: " + std::to_string(out_of_bounds) + " outside [ln k - 1/tau, ln k + 1/tau], " +
             std::to_string(out_of_domain) + " outside (0, C), " + std::to_string(non_finite) +
             " non-finite loss batches");
}

// ---- 5 ---------------------------------------------------------------------------

// Exhaustive best 2-partition by summed resultant length (= n * mean cosine
// to the normalized cluster mean).
std::vector<std::size_t> exhaustive_two_partition(const Matrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  double best = -1.0;
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    RowVector c[2] = {RowVector::Zero(x.cols()), RowVector::Zero(x.cols())};
    for (std::size_t i = 0; i < n; ++i) c[(mask >> i) & 1] += x.row(static_cast<Eigen::Index>(i));
    const double obj = c[0].norm() + c[1].norm();
    if (obj > best + 1e-12) {
      best = obj;
      for (std::size_t i = 0; i < n; ++i) arg[i] = (mask >> i) & 1;
    }
  }
  return arg;
}

bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  bool direct = true, swapped = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    direct = direct && a[i] == b[i];
    swapped = swapped && a[i] != b[i];
  }
  return direct || swapped;
}

// Two non-empty clusters around u and -u.
Matrix antipodal_problem(std::mt19937_64& g, Eigen::Index n) {
  const Eigen::Index first = 1 + static_cast<Eigen::Index>(g() % static_cast<std::uint64_t>(n - 1));
  const RowVector u = random_unit_rows(1, 3, g).row(0);
  Matrix x = std::uniform_real_distribution<double>(0.05, 0.3)(g) * random_matrix(n, 3, g);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) += i < first ? u : RowVector(-u);
  return normalize_rows(x);
}

// k random directions, points scattered around them.
Matrix clustered_problem(std::mt19937_64& g, Eigen::Index n, std::size_t k, Eigen::Index z) {
  const Matrix dirs = random_unit_rows(static_cast<Eigen::Index>(k), z, g);
  const double spread = std::uniform_real_distribution<double>(0.05, 0.3)(g);
  Matrix x = spread * random_matrix(n, z, g);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) += dirs.row(static_cast<Eigen::Index>(g() % k));
  return normalize_rows(x);
}

void criterion5() {
  Budget b;
  std::mt19937_64 g(505);
  std::size_t decreases = 0, oracle_cases = 0, oracle_misses = 0;
  double worst_norm = 0.0;
  for (int t = 0; t < 500; ++t) {
    const bool small = t % 2 == 0;  // half are n <= 12, k = 2 oracle instances
    const std::size_t k = small ? 2 : 1 + g() % 8;
    const auto n = static_cast<Eigen::Index>(small ? 4 + g() % 9 : static_cast<std::uint64_t>(k) + g() % 300);
    const Matrix x = small ? antipodal_problem(g, n)
                           : (t % 4 == 1 ? random_unit_rows(n, 8, g) : clustered_problem(g, n, k, 8));
    const PrototypeSet p = fit_prototypes(x, k, g());
    for (std::size_t i = 1; i < p.objective_trace.size(); ++i) {
      decreases += p.objective_trace[i] < p.objective_trace[i - 1] - 1e-12;
    }
    for (Eigen::Index r = 0; r < p.vectors.rows(); ++r) {
      worst_norm = std::max(worst_norm, std::abs(p.vectors.row(r).norm() - 1.0));
    }
    if (small) {
      ++oracle_cases;
      oracle_misses += !same_partition(p.assignment, exhaustive_two_partition(x));
    }
  }
  report(5, decreases == 0 && oracle_misses == 0 && worst_norm < 1e-9, b.cpu(), 60.0,
         std::to_string(decreases) + " objective decreases over 500 problems; oracle mismatches " +
             std::to_string(oracle_misses) + "/" + std::to_string(oracle_cases) + "; max | |p| - 1 | = " +
             fmt("%.2g", worst_norm));
}

// ---- 6-10: experiment runs on the synthetic default -------------------------------

constexpr int kSeeds = 5;
const double kGammas[2] = {0.0, 0.10};

struct Cell {
  RunConfig cfg;
  std::optional<PreparedRun> prepared;
  std::optional<PipelineResult> result;
  double pretrain_cpu = 0.0;
  double finetune_cpu = 0.0;
};

RunConfig cell_config(int seed, double gamma_p) {
  RunConfig c = preset("default");
  c.seed = static_cast<std::uint64_t>(seed);
  c.gamma_l = 0.05;
  c.gamma_p = gamma_p;
  return c;
}

// cells[g][s]
using Grid = std::vector<std::vector<Cell>>;

void prepare_cell(Cell& cell) {
  if (cell.prepared) return;
  const std::clock_t t0 = std::clock();
  cell.prepared = prepare_run(cell.cfg);
  cell.pretrain_cpu = static_cast<double>(std::clock() - t0) / CLOCKS_PER_SEC;
}

void finish_cell(Cell& cell) {
  prepare_cell(cell);
  if (cell.result) return;
  const std::clock_t t0 = std::clock();
  cell.result = finish_run(*cell.prepared, cell.cfg);
  cell.finetune_cpu = static_cast<double>(std::clock() - t0) / CLOCKS_PER_SEC;
}

Grid make_grid() {
  Grid grid(2);
  for (int gi = 0; gi < 2; ++gi) {
    for (int s = 0; s < kSeeds; ++s) grid[gi].push_back(Cell{cell_config(s, kGammas[gi]), {}, {}, 0.0, 0.0});
  }
  return grid;
}

void criterion6(Grid& grid) {
  double cpu = 0.0, first = 0.0, last = 0.0;
  int rising_energy = 0;
  for (Cell& c : grid[0]) {
    prepare_cell(c);
    cpu += c.pretrain_cpu;
    const auto& trace = c.prepared->pretrain.trace;
    first += trace.front().probe_uniformity / kSeeds;
    last += trace.back().probe_uniformity / kSeeds;
    rising_energy += trace.back().probe_uniformity < trace.front().probe_uniformity;
  }
  // The energy of the contrastive objective is E = -S_cont; the assertion is
  // that pre-training raises E on training samples, i.e. S_cont falls.
  report(6, last < first, cpu, 180.0,
         "mean S_cont of training probe " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " (energy -S_cont " +
             fmt("%.4f", -first) + " -> " + fmt("%.4f", -last) + "; rises in " + std::to_string(rising_energy) + "/" +
             std::to_string(kSeeds) + " seeds)");
}

void criterion7and8(Grid& grid) {
  double cpu = 0.0;
  double elsa[2] = {0, 0}, base[2] = {0, 0};
  std::vector<double> correlations;
  std::size_t min_epochs = SIZE_MAX;
  for (int gi = 0; gi < 2; ++gi) {
    for (Cell& c : grid[gi]) {
      finish_cell(c);
      cpu += c.pretrain_cpu + c.finetune_cpu;
      elsa[gi] += c.result->test_auroc / kSeeds;
      base[gi] += c.result->baseline_auroc / kSeeds;
      std::vector<double> es, ta;
      for (const auto& m : c.result->finetune.trace) {
        es.push_back(m.earlystop_auroc);
        ta.push_back(*m.test_auroc);
      }
      min_epochs = std::min(min_epochs, es.size());
      correlations.push_back(pearson(es, ta));
      std::printf("    seed %llu gamma_p %.2f: elsa+ %.4f  baseline %.4f  best epoch %zu  pearson %.3f\n",
                  static_cast<unsigned long long>(c.cfg.seed), c.cfg.gamma_p, c.result->test_auroc,
                  c.result->baseline_auroc, c.result->finetune.best_epoch, correlations.back());
    }
  }
  const double margin = elsa[1] - base[1];
  const double elsa_drop = elsa[0] - elsa[1], base_drop = base[0] - base[1];
  report(7, margin >= 0.05 && elsa_drop < base_drop, cpu, 600.0,
         "gamma_p=0.10: elsa+ " + fmt("%.4f", elsa[1]) + " vs baseline " + fmt("%.4f", base[1]) + " (margin " +
             fmt("%.4f", margin) + ", needs >= 0.05); drop from gamma_p=0: elsa+ " + fmt("%.4f", elsa_drop) +
             ", needs < baseline " + fmt("%.4f", base_drop));

  const double min_r = *std::min_element(correlations.begin(), correlations.end());
  double mean_r = 0.0;
  for (double r : correlations) mean_r += r / static_cast<double>(correlations.size());
  report(8, min_r > 0.5 && min_epochs >= 20, 0.0, 1.0,
         "pearson(earlystop, test auroc) per run: min " + fmt("%.3f", min_r) + ", mean " + fmt("%.3f", mean_r) +
             " over " + std::to_string(correlations.size()) + " runs of " + std::to_string(min_epochs) +
             " recorded epochs (cpu counted in criterion 7)");
}

void criterion9() {
  Budget b;
  RunConfig cfg = preset("default");
  cfg.gamma_l = 0.05;
  cfg.gamma_p = 0.05;
  const std::vector<AblationEntry> matrix{{ScoreKind::Energy, LossKind::Elsa}, {ScoreKind::Uniformity, LossKind::Elsa}};
  const AblationReport r = run_ablation(cfg, matrix, 3);
  bool paired = true;
  for (const auto& row : r.rows) paired = paired && row.split_hash == r.rows[0].split_hash;
  for (const auto& row : r.rows) {
    std::printf("    (%s, %s):", to_string(row.entry.score).c_str(), to_string(row.entry.loss).c_str());
    for (double a : row.auroc) std::printf(" %.4f", a);
    std::printf("  mean %.4f\n", row.mean);
  }
  report(9, paired && r.rows[0].mean >= r.rows[1].mean, b.cpu(), 600.0,
         "(energy, elsa) " + fmt("%.4f", r.rows[0].mean) + " >= (uniformity, elsa) " + fmt("%.4f", r.rows[1].mean) +
             " over 3 seed-paired runs" + (paired ? "" : "; SPLITS NOT PAIRED"));
}

void criterion10(Grid& grid) {
  // Seeds 0..2 at both pollution ratios; the k = 16 runs are the criterion-7
  // cells, the k = 1 runs re-use their pre-training.
  Budget b;
  double k16 = 0.0, k1 = 0.0;
  int aborted = 0;
  const int n = 3 * 2;
  for (int gi = 0; gi < 2; ++gi) {
    for (int s = 0; s < 3; ++s) {
      Cell& c = grid[gi][s];
      finish_cell(c);
      RunConfig one = c.cfg;
      one.prototype_count = 1;
      one.enforce_positivity = false;
      const PipelineResult r = finish_run(*c.prepared, one);
      aborted += r.finetune.aborted;
      k16 += c.result->test_auroc / n;
      k1 += r.test_auroc / n;
      std::printf("    seed %d gamma_p %.2f: k=16 %.4f  k=1 %.4f%s\n", s, c.cfg.gamma_p, c.result->test_auroc,
                  r.test_auroc, r.finetune.aborted ? ("  (stopped: " + r.finetune.abort_reason + ")").c_str() : "");
    }
  }
  report(10, k1 < k16, b.cpu(), 600.0,
         "mean auroc k=1 " + fmt("%.4f", k1) + " < k=16 " + fmt("%.4f", k16) + " over 3 seeds x gamma_p {0, 0.10}; " +
             std::to_string(aborted) + " k=1 runs stopped early");
}

// ---- 11 --------------------------------------------------------------------------

std::string pipeline_fingerprint(const RunConfig& cfg) {
  static const std::regex clock(R"("wallclock":[^,}]*,?)");
  std::ostringstream out;
  const PreparedRun prepared = prepare_run(cfg, [&](const PretrainEpochRecord& r) {
    out << std::regex_replace(to_json(r).dump(), clock, "") << '\n';
  });
  const PipelineResult res =
      finish_run(prepared, cfg, [&](const MetricsRecord& m) { out << std::regex_replace(to_json(m).dump(), clock, "") << '\n'; });
  Checkpoint ck;
  ck.stage = "finetune";
  ck.epoch = res.finetune.best_epoch;
  ck.config = cfg;
  ck.data_std = prepared.data_std;
  ck.encoder = res.finetune.best_encoder;
  ck.prototypes = res.finetune.best_prototypes;
  out << res.split_hash << ' ' << fmt("%.17g", res.test_auroc) << ' ' << fmt("%.17g", res.baseline_auroc) << '\n';
  out << encode_checkpoint(ck);
  return out.str();
}

void criterion11() {
  Budget b;
  RunConfig cfg = preset("default");
  cfg.gamma_p = 0.05;
  cfg.pretrain_epochs = 8;
  cfg.finetune_epochs = 8;
  cfg.seed = 11;
  const std::string a = pipeline_fingerprint(cfg);
  const std::string c = pipeline_fingerprint(cfg);
  const bool rerun_identical = a == c;
  if (!rerun_identical) {
    const auto at = std::mismatch(a.begin(), a.end(), c.begin(), c.end()).first - a.begin();
    std::printf("    first difference at byte %td: %s\n", at, a.substr(static_cast<std::size_t>(at), 60).c_str());
  }

  Checkpoint ck;
  ck.config = cfg;
  std::mt19937_64 g(1111);
  ck.encoder = init_encoder({cfg.data.input_dim, cfg.hidden, cfg.embed, cfg.shift_count}, 3);
  ck.prototypes.vectors = random_unit_rows(16, static_cast<Eigen::Index>(cfg.embed), g);
  const std::string first = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(first);
  const std::string second = encode_checkpoint(back);
  const Checkpoint again = decode_checkpoint(second);
  const bool round_trip = first == second && again.encoder.flat() == back.encoder.flat() &&
                          again.prototypes.vectors == back.prototypes.vectors;
  report(11, rerun_identical && round_trip, b.cpu(), 60.0,
         std::string("rerun ") + (rerun_identical ? "byte-identical" : "DIFFERS") + " (" + std::to_string(a.size()) +
             " bytes of traces + checkpoint); checkpoint round trip " + (round_trip ? "bit-exact" : "NOT EXACT"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-11"};
  std::vector<int> only;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const std::set<int> selected(only.begin(), only.end());
  auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  try {
    if (want(1)) criterion1();
    if (want(2)) criterion2();
    if (want(3)) criterion3();
    if (want(4)) criterion4();
    if (want(5)) criterion5();
    Grid grid = make_grid();
    if (want(6)) criterion6(grid);
    if (want(7) || want(8)) criterion7and8(grid);
    if (want(9)) criterion9();
    if (want(10)) criterion10(grid);
    if (want(11)) criterion11();
  } catch (const std::exception& e) {
    std::printf("ERROR: %s\n", e.what());
    return 2;
  }
  std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ALL PASS" : "FAILURES", g_failures);
  return g_failures == 0 ? 0 : 1;
}
