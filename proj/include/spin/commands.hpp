#pragma once

// Command implementations behind the spin_cli verbs. Each returns a process
// exit code: 0 success, 1 validation error, 2 runtime failure.

#include <spin/dataset.hpp>
#include <spin/gradcheck_suite.hpp>
#include <spin/train.hpp>

#include <chrono>
#include <iostream>

namespace spin {

enum ExitCode { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct CommandContext {
  RunConfig cfg;
  std::string out_dir;
  bool force = false;
  std::ostream* log = &std::cout;
};

namespace detail {

namespace fs = std::filesystem;

// Creates `dir`, refusing a non-empty one unless forced.
inline void prepare_out_dir(const std::string& dir, bool force, bool allow_existing = false) {
  if (dir.empty()) throw ValidationError("an output directory is required (--out DIR)");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ValidationError("output path '" + dir + "' exists and is not a directory");
    if (!fs::is_empty(dir) && !force && !allow_existing)
      throw ValidationError("output directory '" + dir + "' is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
}

inline void check_sizes(const std::vector<Sample>& samples, const NetworkConfig& net, const std::string& what) {
  const int div = net.required_divisor();
  for (const auto& s : samples)
    if (s.image.height % div != 0 || s.image.width % div != 0)
      throw ValidationError(what + " sample '" + s.name + "' is " + std::to_string(s.image.height) + "x" +
                            std::to_string(s.image.width) + ", not divisible by " + std::to_string(div) +
                            " (network.hourglass_depth " + std::to_string(net.hourglass_depth) + ")");
}

inline std::vector<Sample> load_split(const RunConfig& cfg, const std::string& split, bool required) {
  if (cfg.data_dir.empty()) throw ValidationError("no dataset: set [data] dir in the config or pass --data");
  if (!fs::exists(fs::path(cfg.data_dir) / "manifest.csv"))
    throw ValidationError("dataset '" + cfg.data_dir + "' has no manifest.csv (create one with the synth command)");
  auto samples = load_dataset(cfg.data_dir, split);
  if (required && samples.empty())
    throw ValidationError("dataset '" + cfg.data_dir + "' has no samples in split '" + split + "'");
  return samples;
}

inline RoadNetwork<float> model_from_checkpoint(const std::string& path, RunConfig* cfg_out = nullptr) {
  if (path.empty()) throw ValidationError("a checkpoint is required (--checkpoint PATH)");
  if (!fs::exists(path)) throw ValidationError("checkpoint '" + path + "' does not exist");
  const CheckpointData data = read_checkpoint(path);
  const RunConfig cfg = parse_config(data.config_text);
  RoadNetwork<float> model(cfg.network, cfg.seed);
  ParamSet<float> ps = model.parameters();
  apply_checkpoint(data, ps);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

inline SynthOptions synth_options(const RunConfig& cfg) {
  SynthOptions o;
  o.divisor = cfg.network.required_divisor();
  o.occluders = cfg.synth.occluders;
  return o;
}

}  // namespace detail

// Synthetic dataset: synth.count training and synth.val_count validation
// samples of synth.size pixels.
inline int cmd_synth(const CommandContext& ctx) {
  const RunConfig& cfg = ctx.cfg;
  if (cfg.synth.count < 1 || cfg.synth.val_count < 0) throw ValidationError("synth.count must be >= 1 and val_count >= 0");
  if (cfg.synth.size % cfg.network.required_divisor() != 0)
    throw ValidationError("synth.size " + std::to_string(cfg.synth.size) + " must be divisible by " +
                          std::to_string(cfg.network.required_divisor()));
  detail::prepare_out_dir(ctx.out_dir, ctx.force);
  const int total = cfg.synth.count + cfg.synth.val_count;
  auto samples = generate_synthetic(cfg.seed, total, cfg.synth.size, detail::synth_options(cfg));
  std::vector<std::string> splits(samples.size(), "train");
  for (int i = cfg.synth.count; i < total; ++i) splits[static_cast<std::size_t>(i)] = "val";
  write_dataset(ctx.out_dir, samples, splits);
  *ctx.log << "wrote " << cfg.synth.count << " train + " << cfg.synth.val_count << " val samples (" << cfg.synth.size
           << "x" << cfg.synth.size << ") to " << ctx.out_dir << "\n";
  return kExitOk;
}

// Trains into <out>/ (config.ini, checkpoint.bin, train_log.csv). With
// `resume`, continues from <out>/checkpoint.bin.
inline int cmd_train(const CommandContext& ctx, bool resume = false) {
  RunConfig cfg = ctx.cfg;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto train = detail::load_split(cfg, cfg.train_split, true);
  const auto val = detail::load_split(cfg, cfg.val_split, false);
  detail::check_sizes(train, cfg.network, "training");
  detail::check_sizes(val, cfg.network, "validation");

  const detail::fs::path out(ctx.out_dir);
  const auto ckpt = out / "checkpoint.bin";
  if (resume && !detail::fs::exists(ckpt)) throw ValidationError("cannot resume: '" + ckpt.string() + "' does not exist");
  detail::prepare_out_dir(ctx.out_dir, ctx.force, resume);

  RoadNetwork<float> model(cfg.network, cfg.seed);
  TrainState<float> state;
  if (resume) {
    ParamSet<float> ps = model.parameters();
    load_checkpoint(ckpt.string(), ps, &state);
  }
  const std::string config_text = serialize_config(cfg);
  detail::write_text(out / "config.ini", config_text);

  FitOptions fo;
  fo.schedule = cfg.schedule;
  fo.train = cfg.train;
  fo.seed = cfg.seed;
  fo.log_path = (out / "train_log.csv").string();
  fo.checkpoint_path = ckpt.string();
  fo.config_text = config_text;
  std::ostream& log = *ctx.log;
  fo.on_epoch = [&log](const LogRow& r) {
    log << "epoch " << r.epoch << " iter " << r.iter << " lr " << r.lr << " L_final " << r.l_final;
    if (!std::isnan(r.val_f1)) log << " val_F1 " << r.val_f1 << " val_IoU " << r.val_iou;
    log << "\n";
    return false;
  };
  fit(model, train, val, fo, resume ? &state : nullptr);
  log << "checkpoint: " << ckpt.string() << "\n";
  return kExitOk;
}

inline int cmd_eval(const CommandContext& ctx, const std::string& checkpoint, const std::string& split) {
  RunConfig ck_cfg;
  const RoadNetwork<float> model = detail::model_from_checkpoint(checkpoint, &ck_cfg);
  RunConfig data_cfg = ctx.cfg;
  if (data_cfg.data_dir.empty()) data_cfg.data_dir = ck_cfg.data_dir;
  const auto samples = detail::load_split(data_cfg, split.empty() ? data_cfg.val_split : split, true);
  detail::prepare_out_dir(ctx.out_dir, ctx.force);
  EvalOptions eo;
  eo.threshold = ck_cfg.train.threshold;
  const MetricsReport rep = evaluate_model(model, samples, eo);
  detail::write_text(detail::fs::path(ctx.out_dir) / "metrics.csv", rep.csv());
  detail::write_text(detail::fs::path(ctx.out_dir) / "metrics.txt", rep.text());
  *ctx.log << rep.text();
  return kExitOk;
}

inline int cmd_predict(const CommandContext& ctx, const std::string& checkpoint, const std::string& image,
                       bool orientation) {
  const RoadNetwork<float> model = detail::model_from_checkpoint(checkpoint);
  if (image.empty()) throw ValidationError("an input image is required (--image PATH)");
  if (!detail::fs::exists(image)) throw ValidationError("image '" + image + "' does not exist");
  const Image img = load_image(image);
  detail::prepare_out_dir(ctx.out_dir, ctx.force);
  const Prediction pred = predict(model, img);
  const std::string stem = detail::fs::path(image).stem().string();
  const auto mask_path = detail::fs::path(ctx.out_dir) / (stem + "_mask.png");
  save_mask(threshold_mask(pred.road.data, img.height, img.width, 0.5), mask_path.string());
  *ctx.log << "mask: " << mask_path.string() << "\n";
  if (orientation) {
    const auto op = detail::fs::path(ctx.out_dir) / (stem + "_orient.png");
    save_class_map(pred.orientation, op.string());
    *ctx.log << "orientation: " << op.string() << "\n";
  }
  return kExitOk;
}

// Runs every registered check on three seeds; nonzero exit on any failure.
inline int cmd_gradcheck(const CommandContext& ctx, const std::string& only = "") {
  std::ostream& log = *ctx.log;
  bool ok = true;
  int ran = 0;
  log << std::left << std::setw(24) << "op" << std::setw(14) << "max_rel_err" << std::setw(10) << "tol"
      << std::setw(16) << "checked/skipped" << "result\n";
  for (const auto& c : gradcheck_cases()) {
    if (!only.empty() && c.name != only) continue;
    ++ran;
    double worst = 0;
    std::size_t checked = 0, skipped = 0;
    for (std::uint64_t k = 0; k < 3; ++k) {
      const GradcheckResult r = c.run(ctx.cfg.seed + k);
      worst = std::max(worst, r.max_rel_error);
      checked += r.checked;
      skipped += r.skipped;
    }
    const bool pass = worst < c.tolerance && checked > 0;
    ok = ok && pass;
    log << std::setw(24) << c.name << std::setw(14) << std::scientific << std::setprecision(3) << worst
        << std::setw(10) << c.tolerance << std::defaultfloat << std::setw(16)
        << (std::to_string(checked) + "/" + std::to_string(skipped)) << (pass ? "PASS" : "FAIL") << "\n";
  }
  if (ran == 0) throw ValidationError("no gradcheck named '" + only + "'");
  return ok ? kExitOk : kExitRuntime;
}

struct AblationRun {
  SpinVariant variant;
  std::size_t parameters = 0;
  std::vector<LogRow> epochs;
};

// Trains the four SPIN variants with one seed on one split. Without a
// configured dataset, a synthetic split is generated from the seed.
inline std::vector<AblationRun> run_ablation(const RunConfig& base, std::ostream& log) {
  std::vector<Sample> train, val;
  if (base.data_dir.empty()) {
    auto all = generate_synthetic(base.seed, base.synth.count + base.synth.val_count, base.synth.size,
                                  detail::synth_options(base));
    val.assign(std::make_move_iterator(all.begin() + base.synth.count), std::make_move_iterator(all.end()));
    all.resize(static_cast<std::size_t>(base.synth.count));
    train = std::move(all);
  } else {
    train = detail::load_split(base, base.train_split, true);
    val = detail::load_split(base, base.val_split, true);
  }
  detail::check_sizes(train, base.network, "training");
  detail::check_sizes(val, base.network, "validation");

  std::vector<AblationRun> runs;
  for (SpinVariant v : {SpinVariant::kNone, SpinVariant::kSpatial, SpinVariant::kInteraction, SpinVariant::kFull}) {
    RunConfig cfg = base;
    cfg.network.spin_variant = v;
    RoadNetwork<float> model(cfg.network, cfg.seed);
    AblationRun run{v, count_parameters(model), {}};
    FitOptions fo;
    fo.schedule = cfg.schedule;
    fo.train = cfg.train;
    fo.seed = cfg.seed;
    const auto t0 = std::chrono::steady_clock::now();
    run.epochs = fit(model, train, val, fo).epochs;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << to_string(v) << ": " << run.parameters << " parameters, final val F1 " << run.epochs.back().val_f1 << " ("
        << std::fixed << std::setprecision(1) << secs << std::defaultfloat << " s)\n";
    runs.push_back(std::move(run));
  }
  return runs;
}

constexpr const char* kAblationHeader = "epoch,none,spatial,interaction,full";

inline std::string ablation_csv(const std::vector<AblationRun>& runs, bool accuracy) {
  std::string s = std::string(kAblationHeader) + "\n";
  for (std::size_t e = 0; e < runs.front().epochs.size(); ++e) {
    s += std::to_string(e);
    for (const auto& r : runs) {
      const LogRow& row = r.epochs.at(e);
      s += "," + detail::format_double(accuracy ? row.val_accuracy : row.val_f1);
    }
    s += "\n";
  }
  return s;
}

// ablation.csv: per-epoch val F1 per variant; convergence.csv: per-epoch val
// pixel accuracy per variant; params.csv: parameter counts and deltas.
inline int cmd_ablate(const CommandContext& ctx) {
  RunConfig cfg = ctx.cfg;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  detail::prepare_out_dir(ctx.out_dir, ctx.force);
  const detail::fs::path out(ctx.out_dir);
  detail::write_text(out / "config.ini", serialize_config(cfg));
  const auto runs = run_ablation(cfg, *ctx.log);
  detail::write_text(out / "ablation.csv", ablation_csv(runs, false));
  detail::write_text(out / "convergence.csv", ablation_csv(runs, true));

  std::string params = "variant,parameters,spin_parameters,delta_vs_none\n";
  for (const auto& r : runs) {
    NetworkConfig n = cfg.network;
    n.spin_variant = r.variant;
    params += std::string(to_string(r.variant)) + "," + std::to_string(r.parameters) + "," +
              std::to_string(spin_overhead(n)) + "," +
              std::to_string(static_cast<long long>(r.parameters) - static_cast<long long>(runs.front().parameters)) + "\n";
  }
  detail::write_text(out / "params.csv", params);

  const double f_none = runs.front().epochs.back().val_f1, f_full = runs.back().epochs.back().val_f1;
  std::ostringstream summary;
  summary << "final val F1: none " << f_none << ", full " << f_full << "\n"
          << "full >= none at final epoch: " << (f_full >= f_none ? "yes" : "no") << "\n";
  detail::write_text(out / "summary.txt", summary.str());
  *ctx.log << summary.str();
  return kExitOk;
}

}  // namespace spin
