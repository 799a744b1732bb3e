#pragma once

// RunConfig: every tunable of the pipeline, serialized as nested JSON.
//
//   {"seed":..., "mode":"elsa_plus",
//    "data": {...}, "scenario": {...}, "encoder": {...},
//    "augment": {"weak": {...}, "strong": {...}, "shift": {"count", "seed", "kind"}},
//    "pretrain": {...}, "prototypes": {...}, "objective": {...},
//    "finetune": {...}, "ensemble": {...}, "workers": 1}
//
// Augmentation noise levels are relative to the training-data standard
// deviation and resolved when the pipeline starts.

#include "elsa/augment.hpp"
#include "elsa/data.hpp"
#include "elsa/encoder.hpp"
#include "elsa/objective.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace elsa {

enum class Mode { Elsa, ElsaPlus };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

struct RunConfig {
  std::uint64_t seed = 0;
  Mode mode = Mode::ElsaPlus;

  SyntheticSpec data;
  std::size_t aux_class_count = 3;  // Scenario-3 auxiliary anomaly classes
  double aux_mean_offset = 1.5;

  Scenario scenario = Scenario::S2;
  double gamma_l = 0.05;
  double gamma_p = 0.0;
  double test_fraction = 0.2;
  double validation_fraction = 0.05;
  std::vector<int> anomaly_classes;  // empty: every anomaly class of the pool

  std::size_t hidden = 64;
  std::size_t embed = 16;

  double weak_noise_rel = 0.05;
  double weak_mask_fraction = 0.1;
  double weak_jitter_lo = 0.9;
  double weak_jitter_hi = 1.1;
  std::size_t strong_n_ops = 3;
  double strong_apply_probability = 0.8;
  double strong_noise_rel = 1.0;
  double strong_permute_fraction = 0.5;
  double strong_flip_fraction = 0.5;
  std::size_t shift_count = 4;
  std::uint64_t shift_seed = 17;
  std::string shift_kind = "random";  // random | planar

  std::size_t pretrain_epochs = 50;
  std::size_t pretrain_batch = 128;
  double pretrain_lr = 0.05;
  double pretrain_momentum = 0.9;
  double shift_loss_weight = 1.0;

  std::size_t prototype_count = 16;
  int refresh_period = 0;  // 0: mode default (1 for elsa, 3 for elsa_plus)
  bool cold_refresh = false;

  double tau = 0.5;
  double score_tau = 0.0;  // 0: same as tau
  CMode c_mode = CMode::Analytic;
  ScoreKind score = ScoreKind::Energy;
  LossKind loss = LossKind::Elsa;
  bool enforce_positivity = true;

  std::size_t finetune_epochs = 50;
  std::size_t finetune_batch = 64;
  double finetune_lr = 1e-3;
  std::size_t monitor_samples = 1;  // ensemble draws for the per-epoch test trace

  std::size_t ensemble_samples = 10;
  EnsembleMode ensemble_mode = EnsembleMode::ScoreAverage;

  std::size_t workers = 1;

  bool use_shifts() const { return mode == Mode::ElsaPlus; }
  std::size_t effective_shift_count() const { return use_shifts() ? shift_count : 1; }
  int effective_refresh_period() const;
  double effective_score_tau() const { return score_tau > 0.0 ? score_tau : tau; }

  /// Every violated constraint, one message each; empty when valid.
  std::vector<std::string> violations() const;
  // Throws ValidationError listing all violations.
  void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = RunConfig{});

/// Named presets: "default" (the synthetic default) and "tiny" (seconds-scale
/// smoke runs).
RunConfig preset(const std::string& name);

/// Applies "dotted.key=value" to a JSON config tree. The value is parsed as
/// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& tree, const std::string& assignment);

RunConfig load_config_file(const std::string& path, const RunConfig& base);

// Deterministic per-purpose seeds from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace elsa
