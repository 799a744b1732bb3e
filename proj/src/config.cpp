#include "elsa/config.hpp"

#include "elsa/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace elsa {

std::string to_string(Mode m) { return m == Mode::Elsa ? "elsa" : "elsa_plus"; }

Mode mode_from_string(const std::string& name) {
  if (name == "elsa") return Mode::Elsa;
  if (name == "elsa_plus" || name == "elsa+") return Mode::ElsaPlus;
  throw ValidationError("unknown mode '" + name + "' (expected elsa or elsa_plus)");
}

int RunConfig::effective_refresh_period() const {
  if (refresh_period != 0) return refresh_period;
  return mode == Mode::Elsa ? 1 : 3;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> v;
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!(tau > 0.0)) v.push_back("objective.tau must be > 0 (got " + std::to_string(tau) + ")");
  if (score_tau < 0.0) v.push_back("objective.score_tau must be >= 0 (0 means tau)");
  if (prototype_count < 1) v.push_back("prototypes.count must be >= 1");
  if (tau > 0.0 && prototype_count >= 1 && enforce_positivity && score == ScoreKind::Energy &&
      !(std::log(static_cast<double>(prototype_count)) > 1.0 / tau)) {
    v.push_back("ln(prototypes.count) must exceed 1/tau for positive energy scores (ln " +
                std::to_string(prototype_count) + " = " +
                std::to_string(std::log(static_cast<double>(prototype_count))) + ", 1/tau = " +
                std::to_string(1.0 / tau) + ")");
  }
  if (!unit(gamma_l)) v.push_back("scenario.gamma_l must lie in [0,1]");
  if (!unit(gamma_p) || gamma_p >= 1.0) v.push_back("scenario.gamma_p must lie in [0,1)");
  if (scenario == Scenario::S1 && gamma_p > 0.0) v.push_back("scenario s1 forbids pollution (gamma_p must be 0)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) v.push_back("scenario.test_fraction must lie in (0,1)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    v.push_back("scenario.validation_fraction must lie in (0,1)");
  }
  if (mode == Mode::ElsaPlus && shift_count < 2) v.push_back("mode elsa_plus requires augment.shift.count >= 2");
  if (shift_count < 1) v.push_back("augment.shift.count must be >= 1");
  if (shift_kind != "random" && shift_kind != "planar") v.push_back("augment.shift.kind must be random or planar");
  if (data.input_dim == 0) v.push_back("data.input_dim must be >= 1");
  if (data.normal_subcluster_count < 1) v.push_back("data.normal_subcluster_count must be >= 1");
  if (!(data.cluster_spread > 0.0)) v.push_back("data.cluster_spread must be > 0");
  if (!(data.within_cluster_spread >= 0.0 && data.within_cluster_spread < data.cluster_spread)) {
    v.push_back("data.within_cluster_spread must lie in [0, cluster_spread)");
  }
  if (data.samples_per_class == 0) v.push_back("data.samples_per_class must be >= 1");
  if (hidden == 0 || embed == 0) v.push_back("encoder.hidden and encoder.embed must be >= 1");
  if (!(weak_noise_rel >= 0.0)) v.push_back("augment.weak.noise_rel must be >= 0");
  if (!(weak_mask_fraction >= 0.0 && weak_mask_fraction < 0.5)) v.push_back("augment.weak.mask_fraction must lie in [0,0.5)");
  if (!(weak_jitter_lo > 0.0 && weak_jitter_lo <= weak_jitter_hi && weak_jitter_hi < 2.0)) {
    v.push_back("augment.weak jitter range must satisfy 0 < lo <= hi < 2");
  }
  if (!unit(strong_apply_probability)) v.push_back("augment.strong.apply_probability must lie in [0,1]");
  if (!(strong_noise_rel >= 4.0 * weak_noise_rel)) v.push_back("augment.strong.noise_rel must be >= 4x augment.weak.noise_rel");
  if (!unit(strong_permute_fraction) || !unit(strong_flip_fraction)) v.push_back("augment.strong fractions must lie in [0,1]");
  if (pretrain_batch < 2) v.push_back("pretrain.batch must be >= 2");
  if (!(pretrain_lr > 0.0)) v.push_back("pretrain.lr must be > 0");
  if (!(pretrain_momentum >= 0.0 && pretrain_momentum < 1.0)) v.push_back("pretrain.momentum must lie in [0,1)");
  if (refresh_period < 0) v.push_back("prototypes.refresh_period must be >= 0");
  if (finetune_batch < 1) v.push_back("finetune.batch must be >= 1");
  if (!(finetune_lr > 0.0)) v.push_back("finetune.lr must be > 0");
  if (monitor_samples < 1) v.push_back("finetune.monitor_samples must be >= 1");
  if (ensemble_samples < 1) v.push_back("ensemble.samples must be >= 1");
  if (workers < 1) v.push_back("workers must be >= 1");
  return v;
}

void RunConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::ostringstream msg;
  msg << "invalid configuration:";
  for (const auto& s : v) msg << "\n  - " << s;
  throw ValidationError(msg.str());
}

// ---------------------------------------------------------------------------

namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

struct Field {
  std::string path;
  std::function<OJson(const RunConfig&)> get;
  std::function<void(RunConfig&, const Json&)> set;
};

template <typename T>
Field plain(std::string path, T RunConfig::*member) {
  return {std::move(path), [member](const RunConfig& c) { return OJson(c.*member); },
          [member](RunConfig& c, const Json& j) { c.*member = j.get<T>(); }};
}

template <typename T>
Field data_field(std::string path, T SyntheticSpec::*member) {
  return {std::move(path), [member](const RunConfig& c) { return OJson(c.data.*member); },
          [member](RunConfig& c, const Json& j) { c.data.*member = j.get<T>(); }};
}

template <typename E>
Field named(std::string path, E RunConfig::*member, E (*parse)(const std::string&)) {
  return {std::move(path), [member](const RunConfig& c) { return OJson(to_string(c.*member)); },
          [member, parse](RunConfig& c, const Json& j) { c.*member = parse(j.get<std::string>()); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      plain("seed", &RunConfig::seed),
      named("mode", &RunConfig::mode, &mode_from_string),
      data_field("data.input_dim", &SyntheticSpec::input_dim),
      data_field("data.normal_subcluster_count", &SyntheticSpec::normal_subcluster_count),
      data_field("data.anomaly_class_count", &SyntheticSpec::anomaly_class_count),
      data_field("data.cluster_spread", &SyntheticSpec::cluster_spread),
      data_field("data.within_cluster_spread", &SyntheticSpec::within_cluster_spread),
      data_field("data.samples_per_class", &SyntheticSpec::samples_per_class),
      plain("data.aux.class_count", &RunConfig::aux_class_count),
      plain("data.aux.mean_offset", &RunConfig::aux_mean_offset),
      named("scenario.name", &RunConfig::scenario, &scenario_from_string),
      plain("scenario.gamma_l", &RunConfig::gamma_l),
      plain("scenario.gamma_p", &RunConfig::gamma_p),
      plain("scenario.test_fraction", &RunConfig::test_fraction),
      plain("scenario.validation_fraction", &RunConfig::validation_fraction),
      plain("scenario.anomaly_classes", &RunConfig::anomaly_classes),
      plain("encoder.hidden", &RunConfig::hidden),
      plain("encoder.embed", &RunConfig::embed),
      plain("augment.weak.noise_rel", &RunConfig::weak_noise_rel),
      plain("augment.weak.mask_fraction", &RunConfig::weak_mask_fraction),
      plain("augment.weak.jitter_lo", &RunConfig::weak_jitter_lo),
      plain("augment.weak.jitter_hi", &RunConfig::weak_jitter_hi),
      plain("augment.strong.n_ops", &RunConfig::strong_n_ops),
      plain("augment.strong.apply_probability", &RunConfig::strong_apply_probability),
      plain("augment.strong.noise_rel", &RunConfig::strong_noise_rel),
      plain("augment.strong.permute_fraction", &RunConfig::strong_permute_fraction),
      plain("augment.strong.flip_fraction", &RunConfig::strong_flip_fraction),
      plain("augment.shift.count", &RunConfig::shift_count),
      plain("augment.shift.seed", &RunConfig::shift_seed),
      plain("augment.shift.kind", &RunConfig::shift_kind),
      plain("pretrain.epochs", &RunConfig::pretrain_epochs),
      plain("pretrain.batch", &RunConfig::pretrain_batch),
      plain("pretrain.lr", &RunConfig::pretrain_lr),
      plain("pretrain.momentum", &RunConfig::pretrain_momentum),
      plain("pretrain.shift_loss_weight", &RunConfig::shift_loss_weight),
      plain("prototypes.count", &RunConfig::prototype_count),
      plain("prototypes.refresh_period", &RunConfig::refresh_period),
      plain("prototypes.cold_refresh", &RunConfig::cold_refresh),
      plain("objective.tau", &RunConfig::tau),
      plain("objective.score_tau", &RunConfig::score_tau),
      named("objective.c_mode", &RunConfig::c_mode, &c_mode_from_string),
      named("objective.score", &RunConfig::score, &score_kind_from_string),
      named("objective.loss", &RunConfig::loss, &loss_kind_from_string),
      plain("objective.enforce_positivity", &RunConfig::enforce_positivity),
      plain("finetune.epochs", &RunConfig::finetune_epochs),
      plain("finetune.batch", &RunConfig::finetune_batch),
      plain("finetune.lr", &RunConfig::finetune_lr),
      plain("finetune.monitor_samples", &RunConfig::monitor_samples),
      plain("ensemble.samples", &RunConfig::ensemble_samples),
      named("ensemble.mode", &RunConfig::ensemble_mode, &ensemble_mode_from_string),
      plain("workers", &RunConfig::workers),
  };
  return table;
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  return parts;
}

void flatten(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, Json>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out.emplace_back(prefix, j);
  }
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  OJson out = OJson::object();
  for (const Field& f : fields()) {
    OJson* node = &out;
    const auto parts = split_path(f.path);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = f.get(cfg);
  }
  return out;
}

RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) throw ValidationError("configuration must be a JSON object");
  RunConfig cfg = base;
  std::vector<std::pair<std::string, Json>> flat;
  flatten(j, "", flat);
  for (const auto& [path, value] : flat) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.path == path; });
    if (it == table.end()) throw ValidationError("unknown configuration key '" + path + "'");
    try {
      it->set(cfg, value);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bad value for '" + path + "': " + e.what());
    }
  }
  return cfg;
}

RunConfig preset(const std::string& name) {
  RunConfig cfg;
  if (name == "default") return cfg;
  if (name == "tiny") {
    cfg.data.input_dim = 8;
    cfg.data.samples_per_class = 120;
    cfg.data.anomaly_class_count = 3;
    cfg.hidden = 16;
    cfg.embed = 8;
    cfg.pretrain_epochs = 3;
    cfg.pretrain_batch = 32;
    cfg.prototype_count = 16;
    cfg.finetune_epochs = 3;
    cfg.finetune_batch = 16;
    cfg.finetune_lr = 1e-3;
    cfg.ensemble_samples = 2;
    cfg.gamma_l = 0.1;
    return cfg;
  }
  throw ValidationError("unknown preset '" + name + "' (expected default or tiny)");
}

void apply_override(nlohmann::json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("override must look like key=value (got '" + assignment + "')");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  Json* node = &tree;
  const auto parts = split_path(key);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
  (*node)[parts.back()] = value;
}

RunConfig load_config_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j, base);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 over (master, stream)
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace elsa
