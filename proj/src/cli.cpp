#include "elsa/cli.hpp"

#include "elsa/checkpoint.hpp"
#include "elsa/config.hpp"
#include "elsa/data.hpp"
#include "elsa/errors.hpp"
#include "elsa/harness.hpp"
#include "elsa/metrics.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace elsa {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

namespace {

// Stream used for the checkpoint RNG state and scoring draws.
constexpr std::uint64_t kScoringStream = 10;

struct ConfigFlags {
  std::string preset = "default";
  bool preset_given = false;
  std::string config_file;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool seed_given = false;
  // shortcuts for frequently changed keys
  std::string scenario, mode;
  double gamma_l = -1, gamma_p = -1, tau = -1;
  long prototypes = -1, pretrain_epochs = -1, finetune_epochs = -1, workers = -1;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--preset", f.preset, "Named preset: default | tiny")->each([&f](const std::string&) {
    f.preset_given = true;
  });
  cmd->add_option("--config", f.config_file, "JSON config file layered over the preset");
  cmd->add_option("--set", f.sets, "Override any config key: dotted.key=value (repeatable)");
  cmd->add_option("--seed", f.seed, std::string("Master seed (default: $") + kSeedEnv + " or 0)")
      ->each([&f](const std::string&) { f.seed_given = true; });
  cmd->add_option("--scenario", f.scenario, "s1 | s2 | s3");
  cmd->add_option("--mode", f.mode, "elsa | elsa_plus");
  cmd->add_option("--gamma-l", f.gamma_l, "Labeled ratio");
  cmd->add_option("--gamma-p", f.gamma_p, "Pollution ratio");
  cmd->add_option("--tau", f.tau, "Temperature");
  cmd->add_option("--prototypes", f.prototypes, "Prototype count");
  cmd->add_option("--pretrain-epochs", f.pretrain_epochs, "Pre-training epochs");
  cmd->add_option("--finetune-epochs", f.finetune_epochs, "Fine-tuning epochs");
  cmd->add_option("--workers", f.workers, "Worker threads for grid commands");
}

std::uint64_t env_seed() {
  const char* raw = std::getenv(kSeedEnv);
  if (raw == nullptr || *raw == '\0') return 0;
  std::uint64_t v = 0;
  const char* end = raw + std::char_traits<char>::length(raw);
  const auto [ptr, ec] = std::from_chars(raw, end, v);
  if (ec != std::errc() || ptr != end) throw UsageError(std::string(kSeedEnv) + " is not an unsigned integer: " + raw);
  return v;
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

template <typename T>
std::string json_text(const T& v) {
  return nlohmann::json(v).dump();
}

// preset (or `base`) <- --config <- shortcuts <- --set <- --seed.
RunConfig resolve_config(const ConfigFlags& f, const nlohmann::json* base) {
  nlohmann::json tree =
      base != nullptr && !f.preset_given ? *base : nlohmann::json(to_json(preset(f.preset)));
  if (!f.config_file.empty()) tree.merge_patch(read_json_file(f.config_file));
  auto set = [&](const std::string& key, const std::string& value) { apply_override(tree, key + "=" + value); };
  if (!f.scenario.empty()) set("scenario.name", json_text(f.scenario));
  if (!f.mode.empty()) set("mode", json_text(f.mode));
  if (f.gamma_l >= 0) set("scenario.gamma_l", json_text(f.gamma_l));
  if (f.gamma_p >= 0) set("scenario.gamma_p", json_text(f.gamma_p));
  if (f.tau >= 0) set("objective.tau", json_text(f.tau));
  if (f.prototypes >= 0) set("prototypes.count", json_text(f.prototypes));
  if (f.pretrain_epochs >= 0) set("pretrain.epochs", json_text(f.pretrain_epochs));
  if (f.finetune_epochs >= 0) set("finetune.epochs", json_text(f.finetune_epochs));
  if (f.workers >= 0) set("workers", json_text(f.workers));
  for (const auto& s : f.sets) apply_override(tree, s);
  if (f.seed_given) {
    tree["seed"] = f.seed;
  } else if (base == nullptr || f.preset_given || std::getenv(kSeedEnv) != nullptr) {
    tree["seed"] = env_seed();
  }
  RunConfig cfg = config_from_json(tree);
  cfg.validate();
  return cfg;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// JSONL sink; inactive when no path is given.
class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) {
    if (path.empty()) return;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + path);
  }
  void write(const OJson& j) {
    if (out_.is_open()) out_ << j.dump() << '\n';
  }

 private:
  std::ofstream out_;
};

OJson tagged(const char* kind, const OJson& body) {
  OJson j;
  j["schema"] = 1;
  j["kind"] = kind;
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  return j;
}

const char* kSplitFiles[3] = {"train.ds", "validation.ds", "test.ds"};

ScenarioSplits read_splits(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory " + dir.string() + " does not exist");
  ScenarioSplits s;
  s.train = read_dataset(dir / kSplitFiles[0]);
  s.validation = read_dataset(dir / kSplitFiles[1]);
  s.test = read_dataset(dir / kSplitFiles[2]);
  s.split_hash = hash_splits(s);
  return s;
}

const nlohmann::json* data_config(const fs::path& dir, nlohmann::json& holder) {
  const fs::path p = dir / "config.json";
  if (!fs::exists(p)) return nullptr;
  holder = read_json_file(p).at("config");
  return &holder;
}

std::string scoring_rng_state(const RunConfig& cfg) {
  std::ostringstream os;
  os << Rng(derive_seed(cfg.seed, kScoringStream));
  return os.str();
}

Rng restore_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw ValidationError("checkpoint RNG state is malformed");
  return rng;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---- commands ------------------------------------------------------------------

int cmd_gen_data(const ConfigFlags& f, const std::string& out_dir, std::ostream& out) {
  const RunConfig cfg = resolve_config(f, nullptr);
  const ScenarioSplits splits = make_splits(cfg);
  ensure_dir(out_dir);
  write_dataset(fs::path(out_dir) / kSplitFiles[0], splits.train);
  write_dataset(fs::path(out_dir) / kSplitFiles[1], splits.validation);
  write_dataset(fs::path(out_dir) / kSplitFiles[2], splits.test);
  OJson meta;
  meta["schema"] = 1;
  meta["config"] = to_json(cfg);
  meta["split_hash"] = splits.split_hash;
  meta["counts"] = {{"train", splits.train.data.size()},
                    {"validation", splits.validation.data.size()},
                    {"test", splits.test.data.size()},
                    {"labeled_normal", splits.train.data.count(SemiLabel::LabeledNormal)},
                    {"labeled_anomaly", splits.train.data.count(SemiLabel::LabeledAnomaly)}};
  write_text(fs::path(out_dir) / "config.json", meta.dump(2) + "\n");
  out << "wrote " << splits.train.data.size() << " train, " << splits.validation.data.size() << " validation, "
      << splits.test.data.size() << " test samples to " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const ConfigFlags& f, const std::string& data_dir, const std::string& ckpt_path,
                 const std::string& metrics_path, std::ostream& out) {
  nlohmann::json holder;
  const RunConfig cfg = resolve_config(f, data_config(data_dir, holder));
  MetricsLog log(metrics_path);
  log.write(tagged("config", {{"config", to_json(cfg)}}));
  const PreparedRun run = prepare_from_splits(cfg, read_splits(data_dir), [&](const PretrainEpochRecord& r) {
    log.write(tagged("pretrain_epoch", to_json(r)));
  });
  Checkpoint ckpt;
  ckpt.stage = "pretrain";
  ckpt.epoch = cfg.pretrain_epochs;
  ckpt.config = cfg;
  ckpt.data_std = run.data_std;
  ckpt.rng_state = scoring_rng_state(cfg);
  ckpt.encoder = run.pretrain.encoder;
  ckpt.prototypes = run.prototypes;
  save_checkpoint(ckpt_path, ckpt);
  const auto& last = run.pretrain.trace.back();
  out << "pretrained " << cfg.pretrain_epochs << " epochs; probe contrastive loss "
      << run.pretrain.trace.front().probe_contrastive << " -> " << last.probe_contrastive << "; wrote " << ckpt_path
      << "\n";
  return 0;
}

int cmd_finetune(const ConfigFlags& f, const std::string& data_dir, const std::string& in_ckpt,
                 const std::string& out_ckpt, const std::string& metrics_path, std::ostream& out) {
  const Checkpoint loaded = load_checkpoint(in_ckpt);
  const nlohmann::json base = to_json(loaded.config);
  const RunConfig cfg = resolve_config(f, &base);
  if (cfg.prototype_count != loaded.prototypes.k()) {
    throw ValidationError("prototype count conflict: checkpoint " + in_ckpt + " has " +
                          std::to_string(loaded.prototypes.k()) + " prototypes but the flags request " +
                          std::to_string(cfg.prototype_count));
  }
  MetricsLog log(metrics_path);
  log.write(tagged("config", {{"config", to_json(cfg)}}));
  const PreparedRun run = resume_run(cfg, read_splits(data_dir), loaded.encoder, loaded.prototypes, loaded.data_std);
  const PipelineResult res =
      finish_run(run, cfg, [&](const MetricsRecord& r) { log.write(tagged("finetune_epoch", to_json(r))); });
  log.write(tagged("result", {{"best_epoch", res.finetune.best_epoch},
                              {"aborted", res.finetune.aborted},
                              {"abort_reason", res.finetune.abort_reason},
                              {"test_auroc", res.test_auroc},
                              {"baseline_auroc", res.baseline_auroc}}));
  Checkpoint ckpt;
  ckpt.stage = "finetune";
  ckpt.epoch = res.finetune.best_epoch;
  ckpt.config = cfg;
  ckpt.data_std = loaded.data_std;
  ckpt.rng_state = scoring_rng_state(cfg);
  ckpt.encoder = res.finetune.best_encoder;
  ckpt.prototypes = res.finetune.best_prototypes;
  save_checkpoint(out_ckpt, ckpt);
  if (res.finetune.aborted) out << "fine-tuning stopped early: " << res.finetune.abort_reason << "\n";
  out << "best epoch " << res.finetune.best_epoch << " (earlystop auroc " << res.finetune.best().earlystop_auroc
      << ")\nfinal test auroc " << res.test_auroc << "\n";
  return 0;
}

Vector score_file(const Checkpoint& ckpt, const LabeledDataset& ds) {
  const RunConfig& cfg = ckpt.config;
  if (ds.data.dim() != ckpt.encoder.dims().input) {
    throw ValidationError("input has " + std::to_string(ds.data.dim()) + " features but the checkpoint expects " +
                          std::to_string(ckpt.encoder.dims().input));
  }
  if (cfg.score == ScoreKind::Uniformity) {
    throw ValidationError("the uniformity score needs the training pool; score with the energy or cosine score");
  }
  const AugmentSuite aug = make_augment_suite(cfg, ckpt.data_std);
  EnsembleConfig ec;
  ec.n_samples = cfg.ensemble_samples;
  ec.mode = cfg.ensemble_mode;
  ec.score = cfg.score;
  ec.tau = cfg.effective_score_tau();
  Rng rng = restore_rng(ckpt.rng_state);
  return score_ensemble(ds.data.features, ckpt.encoder, ckpt.prototypes.vectors, aug, ec, rng);
}

int cmd_score(const std::string& input, const std::string& ckpt_path, const std::string& out_path,
              std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const LabeledDataset ds = read_dataset(input);
  const Vector s = score_file(ckpt, ds);
  std::vector<std::size_t> order(ds.data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ds.data.ids[a] < ds.data.ids[b]; });
  std::ostringstream text;
  for (std::size_t i : order) text << ds.data.ids[i] << '\t' << format_double(s(static_cast<Eigen::Index>(i))) << '\n';
  if (out_path.empty()) {
    out << text.str();
  } else {
    write_text(out_path, text.str());
  }
  return 0;
}

int cmd_eval(const std::string& input, const std::string& ckpt_path, int normal_class, const std::string& out_path,
             std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const LabeledDataset ds = read_dataset(input);
  const Vector s = score_file(ckpt, ds);
  const auto labels = normal_indicator(ds.truth, normal_class);
  const double a = auroc(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())), labels);
  OJson j;
  j["schema"] = 1;
  j["kind"] = "eval";
  j["input"] = input;
  j["checkpoint"] = ckpt_path;
  j["normal_class"] = normal_class;
  j["samples"] = ds.data.size();
  j["auroc"] = a;
  j["config"] = to_json(ckpt.config);
  if (!out_path.empty()) write_text(out_path, j.dump(2) + "\n");
  out << "auroc " << a << "\n";
  return 0;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) throw UsageError("not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

void write_report(const fs::path& dir, const std::vector<std::string>& jsonl, const OJson& summary,
                  const std::string& csv) {
  ensure_dir(dir);
  std::string lines;
  for (const auto& l : jsonl) lines += l + "\n";
  write_text(dir / "metrics.jsonl", lines);
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_text(dir / "table.csv", csv);
}

int cmd_scenario(const ConfigFlags& f, const std::string& out_dir, const std::string& gammas,
                 std::size_t data_seeds, std::size_t mixes, std::ostream& out) {
  const RunConfig cfg = resolve_config(f, nullptr);
  GridSpec grid;
  grid.data_seeds = data_seeds;
  grid.anomaly_mixes = mixes;
  if (!gammas.empty()) {
    grid.gamma_p = parse_list(gammas);
  } else if (cfg.scenario == Scenario::S2) {
    grid.gamma_p = {0.0, 0.05, 0.10};
  } else {
    grid.gamma_p = {cfg.gamma_p};
  }
  const ScenarioReport report = run_scenario(cfg, grid);
  write_report(out_dir, report.jsonl, report.summary, report.csv);
  out << report.csv;
  return 0;
}

std::vector<AblationEntry> parse_matrix(const std::string& text) {
  if (text.empty()) return default_ablation_matrix();
  std::vector<AblationEntry> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("matrix entries look like score:loss (got '" + item + "')");
    out.push_back({score_kind_from_string(item.substr(0, colon)), loss_kind_from_string(item.substr(colon + 1))});
  }
  return out;
}

int cmd_ablation(const ConfigFlags& f, const std::string& out_dir, const std::string& matrix, std::size_t seeds,
                 std::ostream& out) {
  const RunConfig cfg = resolve_config(f, nullptr);
  const AblationReport report = run_ablation(cfg, parse_matrix(matrix), seeds);
  write_report(out_dir, report.jsonl, report.summary, report.csv);
  out << report.csv;
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Energy-based semi-supervised anomaly detection (Elsa / Elsa+)", "elsa"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ConfigFlags flags;
  std::string out_dir, data_dir, ckpt, out_ckpt, metrics, input, out_file, gammas, matrix;
  std::size_t data_seeds = 4, mixes = 3, seeds = 3;
  int normal_class = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic pool and write train/validation/test splits");
  add_config_flags(gen, flags);
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Contrastive pre-training and initial prototypes");
  add_config_flags(pre, flags);
  pre->add_option("--data", data_dir, "Directory written by gen-data")->required();
  pre->add_option("--out", out_ckpt, "Checkpoint to write")->required();
  pre->add_option("--metrics", metrics, "Per-epoch JSONL metrics");

  auto* fin = app.add_subcommand("finetune", "Energy-based fine-tuning from a pre-training checkpoint");
  add_config_flags(fin, flags);
  fin->add_option("--data", data_dir, "Directory written by gen-data")->required();
  fin->add_option("--checkpoint", ckpt, "Input checkpoint")->required();
  fin->add_option("--out", out_ckpt, "Checkpoint to write")->required();
  fin->add_option("--metrics", metrics, "Per-epoch JSONL metrics");

  auto* sc = app.add_subcommand("score", "Ensembled normality score per sample (higher = more normal)");
  sc->add_option("--input", input, "Dataset file")->required();
  sc->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  sc->add_option("--out", out_file, "Write scores here instead of stdout");

  auto* ev = app.add_subcommand("eval", "Test AUROC of a checkpoint on a labeled dataset file");
  ev->add_option("--input", input, "Dataset file")->required();
  ev->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  ev->add_option("--normal-class", normal_class, "Class id treated as normal");
  ev->add_option("--out", out_file, "JSON report");

  auto* scen = app.add_subcommand("scenario", "Grid of full pipeline runs with a summary table");
  add_config_flags(scen, flags);
  scen->add_option("--out", out_dir, "Report directory")->required();
  scen->add_option("--gamma-p-list", gammas, "Comma-separated pollution ratios (default 0,0.05,0.10 for s2)");
  scen->add_option("--data-seeds", data_seeds, "Data seeds per row")->check(CLI::PositiveNumber);
  scen->add_option("--mixes", mixes, "Anomaly-class mixes per row")->check(CLI::PositiveNumber);

  auto* abl = app.add_subcommand("ablation", "Seed-paired score x loss ablation");
  add_config_flags(abl, flags);
  abl->add_option("--out", out_dir, "Report directory")->required();
  abl->add_option("--matrix", matrix, "Comma-separated score:loss pairs (default: all 9)");
  abl->add_option("--seeds", seeds, "Seeds")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (const CLI::App* sub : app.get_subcommands()) err << sub->help();
    return static_cast<int>(ErrorKind::Usage);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(flags, out_dir, out);
    if (pre->parsed()) return cmd_pretrain(flags, data_dir, out_ckpt, metrics, out);
    if (fin->parsed()) return cmd_finetune(flags, data_dir, ckpt, out_ckpt, metrics, out);
    if (sc->parsed()) return cmd_score(input, ckpt, out_file, out);
    if (ev->parsed()) return cmd_eval(input, ckpt, normal_class, out_file, out);
    if (scen->parsed()) return cmd_scenario(flags, out_dir, gammas, data_seeds, mixes, out);
    if (abl->parsed()) return cmd_ablation(flags, out_dir, matrix, seeds, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Validation);
  }
  return static_cast<int>(ErrorKind::Usage);
}

}  // namespace elsa
