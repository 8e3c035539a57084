// spin_cli: synth | train | eval | predict | gradcheck | ablate
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <spin/commands.hpp>

#include <CLI11.hpp>

int main(int argc, char** argv) {
  CLI::App app{"Road segmentation with SPIN graph reasoning"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir;
  std::uint64_t seed = 0;
  bool force = false;
  app.add_option("--config", config_path, "Run configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides [run] seed)");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("--force", force, "Write into a non-empty output directory");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  int count = -1, val_count = -1, size = -1;
  synth->add_option("--count", count, "Training samples");
  synth->add_option("--val-count", val_count, "Validation samples");
  synth->add_option("--size", size, "Tile size in pixels");

  auto* train = app.add_subcommand("train", "Train a model");
  bool resume = false;
  int epochs = -1;
  long max_iters = -1;
  train->add_option("--data", data_dir, "Dataset directory (overrides [data] dir)");
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin");
  train->add_option("--epochs", epochs, "Total epochs (overrides [schedule] epochs)");
  train->add_option("--max-iters", max_iters, "Stop after this many iterations");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint, split, image;
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Dataset directory");
  eval->add_option("--split", split, "Manifest split (default: [data] val_split)");

  auto* pred = app.add_subcommand("predict", "Predict a road mask for one image");
  bool orientation = false;
  pred->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  pred->add_option("--image", image, "Input RGB PNG")->required();
  pred->add_flag("--orientation", orientation, "Also write the orientation argmax map");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  std::string op;
  grad->add_option("--op", op, "Run a single named check");

  auto* ablate = app.add_subcommand("ablate", "Train the four SPIN variants side by side");
  ablate->add_option("--data", data_dir, "Dataset directory (default: synthetic split from the seed)");
  ablate->add_option("--epochs", epochs, "Total epochs (overrides [schedule] epochs)");

  for (auto* sub : {synth, train, eval, pred, grad, ablate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? spin::kExitOk : spin::kExitValidation;
  }

  try {
    spin::CommandContext ctx;
    if (!config_path.empty()) ctx.cfg = spin::load_config(config_path);
    if (*seed_opt) ctx.cfg.seed = seed;
    if (!data_dir.empty()) ctx.cfg.data_dir = data_dir;
    if (count >= 0) ctx.cfg.synth.count = count;
    if (val_count >= 0) ctx.cfg.synth.val_count = val_count;
    if (size >= 0) ctx.cfg.synth.size = size;
    if (epochs >= 0) ctx.cfg.schedule.epochs = epochs;
    if (max_iters >= 0) ctx.cfg.train.max_iters = max_iters;
    ctx.out_dir = out_dir;
    ctx.force = force;

    if (*synth) return spin::cmd_synth(ctx);
    if (*train) return spin::cmd_train(ctx, resume);
    if (*eval) return spin::cmd_eval(ctx, checkpoint, split);
    if (*pred) return spin::cmd_predict(ctx, checkpoint, image, orientation);
    if (*grad) return spin::cmd_gradcheck(ctx, op);
    if (*ablate) return spin::cmd_ablate(ctx);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spin::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spin::kExitRuntime;
  }
  return spin::kExitValidation;
}
