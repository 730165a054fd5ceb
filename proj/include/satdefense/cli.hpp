#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "satdefense/attacks.hpp"
#include "satdefense/config.hpp"
#include "satdefense/datasets.hpp"
#include "satdefense/errors.hpp"
#include "satdefense/evaluation.hpp"
#include "satdefense/fileio.hpp"
#include "satdefense/imageio.hpp"
#include "satdefense/metrics.hpp"
#include "satdefense/model.hpp"
#include "satdefense/transform.hpp"

namespace satdefense::cli {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kConfigEnvVar = "SATBENCH_CONFIG";

enum ExitCode : int { kOk = 0, kInternal = 1, kInputError = 2, kDivergence = 3 };

// Maps an exception escaping a command to its exit status.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const TrainingError*>(&e)) return kDivergence;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const std::invalid_argument*>(&e)) {
    return kInputError;
  }
  return kInternal;
}

// Seeds of the independent streams hanging off the master seed.
struct Seeds {
  std::uint64_t train_data, test_data, init, shuffle, eval;

  static Seeds from(std::uint64_t master) {
    return {derive_seed(master, 100), derive_seed(master, 101), derive_seed(master, 102),
            derive_seed(master, 103), derive_seed(master, 104)};
  }
};

// ---------------------------------------------------------------------------
// Typed views of the configuration

inline SynthOptions synth_options(const RunConfig& cfg) {
  SynthOptions o;
  o.contrast = cfg.get_double("synth.contrast");
  o.contrast_min = cfg.get_double("synth.contrast_min");
  o.background_amp = cfg.get_double("synth.background_amp");
  o.noise_sigma = cfg.get_double("synth.noise_sigma");
  o.object_fraction = cfg.get_double("synth.object_fraction");
  o.max_jitter = cfg.get_size("synth.max_jitter");
  o.texture_amp = cfg.get_double("synth.texture_amp");
  o.texture_block = cfg.get_size("synth.texture_block");
  return o;
}

inline SynthOptions synth_options_train(const RunConfig& cfg) {
  SynthOptions o = synth_options(cfg);
  o.code_flip = cfg.get_double("synth.train_code_flip");
  return o;
}

inline TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_size("train.epochs");
  t.batch_size = cfg.get_size("train.batch_size");
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.seed = Seeds::from(cfg.get_u64("seed")).shuffle;
  try {
    t.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  return t;
}

inline EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig e;
  e.samples = cfg.get_size("eval.samples");
  e.repeats = cfg.get_size("eval.repeats");
  e.workers = std::max<std::size_t>(1, cfg.get_size("workers"));
  e.seed = Seeds::from(cfg.get_u64("seed")).eval;
  try {
    e.validate();
  } catch (const ArgumentError& ex) {
    throw ConfigError(ex.what());
  }
  return e;
}

inline SatDefense sat_defense(const RunConfig& cfg) {
  SatDefense s;
  s.params = {cfg.get_double("sat.translation"), cfg.get_double("sat.scaling"),
              cfg.get_double("sat.rotation")};
  const std::string& interp = cfg.get("sat.interpolation");
  if (interp == "bilinear") {
    s.interpolation = ScaleInterpolation::kBilinear;
  } else if (interp == "nearest") {
    s.interpolation = ScaleInterpolation::kNearest;
  } else {
    throw ConfigError("sat.interpolation must be bilinear or nearest, got '" + interp + "'");
  }
  return s;
}

inline BitDepthDefense bitdepth_defense(const RunConfig& cfg) {
  return {static_cast<int>(cfg.get_size("bitdepth.bits"))};
}

inline std::vector<DefenseKind> defenses(const RunConfig& cfg) {
  std::vector<DefenseKind> out;
  for (const auto& name : cfg.get_list("defense")) {
    if (name == "identity") {
      out.emplace_back(IdentityDefense{});
    } else if (name == "sat") {
      out.emplace_back(sat_defense(cfg));
    } else if (name == "bitdepth") {
      out.emplace_back(bitdepth_defense(cfg));
    } else {
      throw ConfigError("unknown defense '" + name + "'");
    }
  }
  if (out.empty()) throw ConfigError("at least one defense is required");
  for (const auto& d : out) {
    try {
      validate(d);
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

// Budget in the l2 metric convention; "unit" values are converted using the
// image entry count.
inline double l2_budget(const RunConfig& cfg, std::size_t entries) {
  const double eps = cfg.get_double("attack.l2_eps");
  const std::string& conv = cfg.get("attack.l2_convention");
  if (conv == "metric") return eps;
  if (conv == "unit") return eps * kPixelRange / static_cast<double>(entries);
  throw ConfigError("attack.l2_convention must be metric or unit, got '" + conv + "'");
}

inline std::vector<AttackConfig> attacks(const RunConfig& cfg, std::size_t entries) {
  std::vector<AttackConfig> out;
  for (const auto& name : cfg.get_list("attack")) {
    AttackConfig a;
    a.budget.linf_eps = cfg.get_double("attack.linf_eps");
    a.budget.l2_eps = l2_budget(cfg, entries);
    if (name == "none") {
      a.family = AttackFamily::kNone;
    } else if (name == "fgsm") {
      a.family = AttackFamily::kFgsm;
    } else if (name == "ifgsm") {
      a.family = AttackFamily::kIfgsm;
      a.ifgsm_steps = cfg.get_size("ifgsm.steps");
      a.ifgsm_step_size = cfg.get_double("ifgsm.step_size");
    } else if (name == "cw") {
      a.family = AttackFamily::kCw;
      a.budget.active = Norm::kL2;
      a.cw = {cfg.get_size("cw.steps"), cfg.get_double("cw.learning_rate"), cfg.get_double("cw.c"),
              cfg.get_double("cw.kappa")};
    } else if (name == "bpda") {
      a.family = AttackFamily::kBpda;
      const std::string& norm = cfg.get("bpda.norm");
      if (norm == "linf") {
        a.budget.active = Norm::kLinf;
        a.budget.linf_eps = cfg.get_double("bpda.linf_eps");
      } else if (norm == "l2") {
        a.budget.active = Norm::kL2;
      } else {
        throw ConfigError("bpda.norm must be linf or l2, got '" + norm + "'");
      }
      a.bpda.rounds = cfg.get_size("bpda.rounds");
      a.bpda.learning_rate = cfg.get_double("bpda.learning_rate");
      a.bpda.eot_samples = cfg.get_size("bpda.eot_samples");
    } else {
      throw ConfigError("unknown attack '" + name + "'");
    }
    if (a.family != AttackFamily::kNone) {
      try {
        a.budget.validate();
      } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
      }
    }
    out.push_back(a);
  }
  if (out.empty()) throw ConfigError("at least one attack entry is required");
  return out;
}

// ---------------------------------------------------------------------------
// Paths and data

inline std::filesystem::path resolve(const std::string& p) {
  if (p.empty()) throw ConfigError("empty path in config");
  return std::filesystem::absolute(std::filesystem::path(p)).lexically_normal();
}

inline std::filesystem::path require_file(const RunConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (v.empty()) throw ConfigError("config key '" + key + "' must name a file");
  const auto p = resolve(v);
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError("'" + key + "' = '" + v + "' is not a readable file");
  }
  return p;
}

inline std::filesystem::path prepare_output_dir(const RunConfig& cfg) {
  const auto dir = resolve(cfg.get("output"));
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("cannot create output directory '" + dir.string() + "'");
  }
  return dir;
}

// Files a data split needs, resolved and checked before any work starts.
struct DataPaths {
  std::filesystem::path primary;
  std::filesystem::path labels;
};

inline std::optional<DataPaths> data_paths(const RunConfig& cfg, bool train) {
  const std::string& kind = cfg.get("data.kind");
  const std::string split = train ? "train" : "test";
  if (kind == "synthetic") return std::nullopt;
  if (kind == "cifar10") return DataPaths{require_file(cfg, "data." + split + "_path"), {}};
  if (kind == "mnist") {
    return DataPaths{require_file(cfg, "data." + split + "_images"),
                     require_file(cfg, "data." + split + "_labels")};
  }
  throw ConfigError("data.kind must be synthetic, cifar10 or mnist, got '" + kind + "'");
}

inline Dataset load_split(const RunConfig& cfg, const std::optional<DataPaths>& paths, bool train) {
  const std::size_t count = cfg.get_size(train ? "data.train_samples" : "data.test_samples");
  if (count == 0) throw ConfigError("sample counts must be positive");
  const std::string& kind = cfg.get("data.kind");
  if (kind == "cifar10") return load_cifar10(paths->primary, count);
  if (kind == "mnist") return load_mnist_idx(paths->primary, paths->labels, count);
  const Seeds seeds = Seeds::from(cfg.get_u64("seed"));
  return synth_dataset(train ? seeds.train_data : seeds.test_data, count, cfg.get_size("data.side"),
                       cfg.get_size("data.channels"), cfg.get_size("data.classes"),
                       train ? synth_options_train(cfg) : synth_options(cfg));
}

inline Classifier load_model_for(const std::filesystem::path& checkpoint, const Dataset& data) {
  Classifier model = load_checkpoint<float>(checkpoint);
  const auto in = model.input_shape();
  if (in.height != data.height() || in.width != data.width() || in.channels != data.channels()) {
    throw ShapeError("checkpoint expects " + std::to_string(in.height) + "x" +
                     std::to_string(in.width) + "x" + std::to_string(in.channels) +
                     " images, data has " + data[0].image.shape_string());
  }
  if (model.num_classes() != data.num_classes()) {
    throw ShapeError("checkpoint has " + std::to_string(model.num_classes()) +
                     " classes, data has " + std::to_string(data.num_classes()));
  }
  return model;
}

// Evaluation pool: optionally curated to correctly classified samples.
inline Dataset evaluation_set(const Classifier& model, const Dataset& pool, const RunConfig& cfg,
                              std::ostream& log) {
  const std::size_t n = cfg.get_size("eval.samples");
  Dataset set = cfg.get_bool("eval.curate") ? curate_correct(model, pool, n) : pool.head(n);
  if (set.size() < n) {
    log << "warning: only " << set.size() << " evaluation samples available (requested " << n << ")\n";
  }
  return set;
}

inline std::string file_slug(const std::string& id) {
  std::string s;
  for (char c : id) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '.') ? c : '_';
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

// Loadable as a config: the header is comments, the body is the canonical
// configuration.
inline std::string manifest_text(const RunConfig& cfg, const std::string& command,
                                 const std::filesystem::path& checkpoint) {
  std::string out = "# satbench manifest\n";
  out += std::string("# tool_version = ") + kToolVersion + "\n";
  out += "# command = " + command + "\n";
  out += "# config_hash = " + hex64(cfg.hash()) + "\n";
  out += "# seed = " + cfg.get("seed") + "\n";
  const auto bytes = read_binary_file(checkpoint);
  out += "# checkpoint_fnv1a = " +
         hex64(fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()))) +
         "\n";
  return out + cfg.canonical();
}

// ---------------------------------------------------------------------------
// Commands. Each resolves every path first, computes, then writes outputs.

inline int cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto paths = data_paths(cfg, true);
  const auto checkpoint = resolve(cfg.get("checkpoint"));
  const auto out_dir = prepare_output_dir(cfg);
  const TrainConfig tc = train_config(cfg);

  const Dataset data = load_split(cfg, paths, true);
  const Seeds seeds = Seeds::from(cfg.get_u64("seed"));
  Classifier model = Classifier::standard_cnn(
      {data.height(), data.width(), data.channels()}, data.num_classes(), seeds.init);
  log << "training on " << data.size() << " samples, " << model.parameter_count() << " parameters\n";
  std::string train_log = "epoch,loss,train_acc\n";
  train(model, data, tc, [&](const EpochStats& s) {
    log << "epoch " << s.epoch << " loss " << format_metric(s.mean_loss) << " train_acc "
        << format_metric(s.train_accuracy) << "\n";
    train_log += std::to_string(s.epoch) + "," + format_metric(s.mean_loss) + "," +
                 format_metric(s.train_accuracy) + "\n";
  });
  save_checkpoint(model, checkpoint);
  write_file_atomic(out_dir / "train_log.csv", train_log);
  log << "checkpoint written to " << checkpoint.string() << "\n";
  return kOk;
}

inline int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  const auto paths = data_paths(cfg, false);
  const auto checkpoint = require_file(cfg, "checkpoint");
  const auto out_dir = prepare_output_dir(cfg);
  const EvalConfig ec = eval_config(cfg);
  const auto defense_list = defenses(cfg);

  const Dataset pool = load_split(cfg, paths, false);
  const Classifier model = load_model_for(checkpoint, pool);
  const auto attack_list = attacks(cfg, pool[0].image.size());
  const Dataset set = evaluation_set(model, pool, cfg, log);
  log << "evaluating " << set.size() << " samples\n";

  std::vector<EvalRecord> records;
  std::vector<EvalRecord> curves;
  for (const auto& defense : defense_list) {
    for (const auto& attack : attack_list) {
      EvalRecord rec = attack.family == AttackFamily::kBpda
                           ? eval_bpda_rounds(model, set, defense, attack, ec)
                           : eval_attack(model, set, defense, attack, ec);
      log << rec.defense_id << " " << rec.attack_id << " acc " << format_metric(rec.acc) << " asr "
          << format_metric(rec.asr) << "\n";
      if (!rec.series.empty()) curves.push_back(rec);
      records.push_back(std::move(rec));
    }
  }
  const auto table1 = table1_analogue(
      model, set, {IdentityDefense{}, sat_defense(cfg), bitdepth_defense(cfg)}, ec);

  write_file_atomic(out_dir / "eval.csv", eval_csv(records));
  for (const auto& c : curves) {
    const std::string name = defense_list.size() == 1 ? "bpda_rounds.csv"
                                                      : "bpda_rounds_" + file_slug(c.defense_id) + ".csv";
    write_file_atomic(out_dir / name, bpda_rounds_csv(c));
  }
  write_file_atomic(out_dir / "table1.csv", table1_csv(table1));
  write_file_atomic(out_dir / "manifest.txt", manifest_text(cfg, "evaluate", checkpoint));
  return kOk;
}

inline int cmd_sweep(const RunConfig& cfg, bool full_grid, std::ostream& log) {
  const auto paths = data_paths(cfg, false);
  const auto checkpoint = require_file(cfg, "checkpoint");
  const auto out_dir = prepare_output_dir(cfg);
  const EvalConfig ec = eval_config(cfg);
  const std::size_t points = full_grid ? 11 : cfg.get_size("sweep.points");
  if (points == 0) throw ConfigError("sweep.points must be positive");
  const double floor = cfg.get_double("sweep.floor");
  const SatDefense sat = sat_defense(cfg);

  const Dataset pool = load_split(cfg, paths, false);
  const Classifier model = load_model_for(checkpoint, pool);
  const Dataset set = evaluation_set(model, pool, cfg, log);
  const SweepSpec spec = SweepSpec::with_points(points);
  log << "sweeping " << spec.cell_count() << " cells over " << set.size() << " samples\n";
  const auto cells = sweep(model, set, spec, ec, sat.interpolation);
  const double clean = eval_clean(model, set, IdentityDefense{}, ec).acc;
  const auto front = pareto(cells, floor, clean);
  log << front.size() << " Pareto cells at floor " << format_compact(floor) << " x "
      << format_metric(clean) << "\n";

  write_file_atomic(out_dir / "sweep.csv", sweep_csv(cells));
  write_file_atomic(out_dir / "pareto.csv", pareto_csv(front));
  write_file_atomic(out_dir / "sweep_manifest.txt",
                    manifest_text(cfg, full_grid ? "sweep --full-grid" : "sweep", checkpoint));
  return kOk;
}

inline int cmd_metrics(const std::string& a, const std::string& b, std::ostream& out) {
  const auto pa = resolve(a);
  const auto pb = resolve(b);
  const Image ia = load_image(pa);
  const Image ib = load_image(pb);
  const MetricReport r = metric_report(ia, ib);
  out << "l2 " << format_metric(r.l2) << "\n"
      << "ssim " << format_metric(r.ssim) << "\n"
      << "psnr " << format_metric(r.psnr) << "\n"
      << "mse " << format_metric(r.mse) << "\n";
  return kOk;
}

// Writes one tensor file per (attack, sample) plus an index. BPDA attacks go
// through the first configured defense.
inline int cmd_attack(const RunConfig& cfg, const std::string& dir, std::ostream& log) {
  const auto paths = data_paths(cfg, false);
  const auto checkpoint = require_file(cfg, "checkpoint");
  const auto out_dir = resolve(dir);
  std::filesystem::create_directories(out_dir);
  const EvalConfig ec = eval_config(cfg);
  const DefenseKind defense = defenses(cfg).front();

  const Dataset pool = load_split(cfg, paths, false);
  const Classifier model = load_model_for(checkpoint, pool);
  const auto attack_list = attacks(cfg, pool[0].image.size());
  const Dataset set = evaluation_set(model, pool, cfg, log);

  struct Item {
    std::string file;
    TensorFile tensor;
    bool reached = false;
  };
  std::vector<Item> items;
  for (const auto& attack : attack_list) {
    if (attack.family == AttackFamily::kNone) continue;
    AttackConfig quiet = attack;
    quiet.bpda.keep_trace = false;
    const std::string slug = file_slug(attack.id());
    std::vector<Item> batch(set.size());
    parallel_for(set.size(), ec.workers, [&](std::size_t i) {
      const auto& s = set[i];
      const std::size_t target = detail::sample_target(ec, i, s.label, model.num_classes());
      Image ae = generate_adversarial(model, defense, quiet, ec, i, s.image, s.label, target);
      const bool reached = model.predict(ae) == target;
      batch[i] = {slug + "_" + std::to_string(i) + ".satimg",
                  {std::move(ae), static_cast<std::uint32_t>(s.label),
                   static_cast<std::uint32_t>(target)},
                  reached};
    });
    for (auto& it : batch) items.push_back(std::move(it));
  }
  std::string index = "file,true_label,target_label,reached_target\n";
  for (const auto& it : items) {
    write_file_atomic(out_dir / it.file, encode_tensor(it.tensor));
    index += it.file + "," + std::to_string(it.tensor.true_label) + "," +
             std::to_string(it.tensor.target_label) + "," + (it.reached ? "1" : "0") + "\n";
  }
  write_file_atomic(out_dir / "index.csv", index);
  log << "wrote " << items.size() << " adversarial examples to " << out_dir.string() << "\n";
  return kOk;
}

}  // namespace satdefense::cli
