#include <functional>
#include <memory>

#include "CLI11.hpp"
#include "commands.hpp"
#include "voxgrid/cli.hpp"
#include "voxgrid/errors.hpp"

namespace voxgrid::cli {

namespace {

struct Command {
  CLI::App* app;
  std::string name;
  std::function<std::string()> out_dir;
  std::function<void(RunRecord&, std::ostream&)> run;
};

void add_train_options(CLI::App* sub, TrainArgs& t, bool single_run) {
  sub->add_option("--manifest", t.manifest, "Sample manifest (JSON)")->required();
  sub->add_option("--split,--split-file", t.split_file, "Split JSON from 'split' (default: manifest tags)");
  sub->add_option("--preset", t.preset, "Model preset")->required();
  sub->add_option("--repr", t.repr, "atomtype | shape | density | gradmag")->required();
  sub->add_option("--label", t.label, "Label to fit (default: the only label)");
  if (single_run) {
    sub->add_option("--fraction", t.fraction, "Fraction of the train split to use")->capture_default_str();
    sub->add_option("--seed", t.seed, "Seed for subset, init, order and augmentation")->capture_default_str();
    sub->add_option("--name", t.name, "Checkpoint file stem")->capture_default_str();
  }
  sub->add_option("--epochs", t.epochs)->capture_default_str();
  sub->add_option("--patience", t.patience, "Early-stopping patience (0 disables)")->capture_default_str();
  sub->add_option("--batch", t.batch)->capture_default_str();
  sub->add_option("--lr", t.lr)->capture_default_str();
  sub->add_flag("--augment", t.augment, "Random rotations each epoch");
  sub->add_flag("--octahedral", t.octahedral, "Restrict augmentation to the 24 cube rotations");
  sub->add_option("--width", t.width, "Override the base channel width")->capture_default_str();
  sub->add_option("--groups", t.groups, "Override the GroupNorm group count")->capture_default_str();
  sub->add_option("--target-loss", t.target_loss, "Stop once an epoch's train loss falls below");
  sub->add_option("--out", t.out, "Output directory")->required();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Voxel representation toolkit: voxelize, split, train, evaluate."};
  app.name("voxgrid");
  app.require_subcommand(1);

  VoxelizeArgs vox;
  SynthDensityArgs synth;
  SplitArgs split;
  TrainArgs train;
  EvalArgs eval;
  CurveArgs curve;
  SyntheticArgs gen;
  std::vector<Command> commands;

  {
    auto* sub = app.add_subcommand("voxelize", "Write one VOXB grid per sample plus grids/index.json");
    sub->add_option("--manifest", vox.manifest)->required();
    sub->add_option("--repr", vox.repr, "atomtype | shape | density | gradmag")->required();
    sub->add_option("--task", vox.task, "complex | molecule")->required();
    sub->add_option("--split", vox.split, "Only samples with this split tag");
    sub->add_option("--out", vox.out)->required();
    commands.push_back({sub, "voxelize", [&] { return vox.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_voxelize(vox, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("synth-density", "Compute synthetic density maps and a manifest using them");
    sub->add_option("--manifest", synth.manifest)->required();
    sub->add_option("--task", synth.task, "complex | molecule")->required();
    sub->add_option("--sigma", synth.sigma, "Gaussian width per atom (Å)")->capture_default_str();
    sub->add_option("--margin", synth.margin, "Voxels added to the task grid edge")->capture_default_str();
    sub->add_option("--out", synth.out)->required();
    commands.push_back({sub, "synth-density", [&] { return synth.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_synth_density(synth, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("split", "Leakage-controlled train/val/test split");
    sub->add_option("--manifest", split.manifest)->required();
    sub->add_option("--fractions", split.fractions, "train,val,test")->delimiter(',')->expected(3);
    sub->add_option("--pinned", split.pinned, "File of ids (one per line) forced into test");
    sub->add_option("--seed", split.seed)->capture_default_str();
    sub->add_option("--seq-hi", split.seq_hi)->capture_default_str();
    sub->add_option("--seq-lo", split.seq_lo)->capture_default_str();
    sub->add_option("--tanimoto", split.tanimoto)->capture_default_str();
    sub->add_option("--out", split.out)->required();
    commands.push_back({sub, "split", [&] { return split.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_split(split, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("train", "Train one model and write its checkpoint and history");
    add_train_options(sub, train, true);
    commands.push_back({sub, "train", [&] { return train.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_train(train, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
    sub->add_option("--checkpoint", eval.checkpoint)->required();
    sub->add_option("--manifest", eval.manifest, "Default: the manifest used for training");
    sub->add_option("--split-file", eval.split_file, "Default: the split used for training");
    sub->add_option("--split", eval.split, "Split tag to evaluate")->capture_default_str();
    sub->add_option("--metric", eval.metric, "spearman | mae")->capture_default_str();
    sub->add_option("--batch", eval.batch)->capture_default_str();
    sub->add_option("--out", eval.out)->required();
    commands.push_back({sub, "eval", [&] { return eval.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_eval(eval, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("curve", "Data-efficiency sweep over fractions and seeds");
    add_train_options(sub, curve.train, false);
    sub->add_option("--fractions", curve.fractions)->delimiter(',');
    sub->add_option("--seeds", curve.seeds)->delimiter(',');
    sub->add_option("--metric", curve.metric, "spearman | mae")->capture_default_str();
    sub->add_option("--eval-split", curve.split, "Split tag to evaluate")->capture_default_str();
    commands.push_back({sub, "curve", [&] { return curve.train.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_curve(curve, r, o); }});
  }
  {
    auto* sub = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset with an analytic label");
    sub->add_option("--task", gen.task, "complex | molecule")->required();
    sub->add_option("--count", gen.count)->capture_default_str();
    sub->add_option("--seed", gen.seed)->capture_default_str();
    sub->add_flag("--with-density", gen.with_density, "Also write synthetic density maps");
    sub->add_option("--out", gen.out)->required();
    commands.push_back({sub, "gen-synthetic", [&] { return gen.out; },
                        [&](RunRecord& r, std::ostream& o) { cmd_gen_synthetic(gen, r, o); }});
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitDataError;
  }

  for (const auto& cmd : commands) {
    if (!cmd.app->parsed()) continue;
    RunRecord rec;
    rec.command = cmd.name;
    const fs::path reports = fs::path(cmd.out_dir()) / "reports";
    const auto finish = [&](const std::string& status, const std::string& error, std::optional<int> epoch) {
      try {
        write_run_record(rec, reports, status, error, epoch);
      } catch (const std::exception& e) {
        err << "warning: could not write run record: " << e.what() << "\n";
      }
    };
    try {
      cmd.run(rec, out);
    } catch (const NumericalError& e) {
      err << "error: " << e.what() << "\n";
      finish("numerical_error", e.what(), e.epoch());
      return kExitNumerical;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      finish("error", e.what(), std::nullopt);
      return kExitDataError;
    }
    finish("ok", {}, std::nullopt);
    return kExitOk;
  }
  return kExitDataError;
}

}  // namespace voxgrid::cli
