#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "svg.hpp"
#include "voxgrid/errors.hpp"
#include "voxgrid/nn/checkpoint.hpp"
#include "voxgrid/splitter.hpp"

namespace voxgrid::cli {

namespace {

using SampleCache = std::map<std::string, std::shared_ptr<const LoadedSample>>;

// Everything a training run needs that does not depend on fraction or seed.
struct Context {
  io::Manifest manifest;
  std::map<std::string, std::string> tags;
  std::string label;
  voxel::Task task{};
  voxel::ReprMode mode{};
  std::vector<std::string> train_ids, val_ids;
  SampleCache cache;
};

Context make_context(const TrainArgs& a, const std::vector<std::string>& extra_tags) {
  Context c;
  c.task = preset_task(a.preset);
  c.mode = voxel::parse_repr(a.repr);
  c.manifest = io::load_manifest(a.manifest);
  c.tags = split_tags(c.manifest, a.split_file ? std::optional<fs::path>(*a.split_file) : std::nullopt);
  c.label = resolve_label(c.manifest, a.label);
  c.train_ids = ids_with_tag(c.manifest, c.tags, "train");
  c.val_ids = ids_with_tag(c.manifest, c.tags, "val");
  if (c.train_ids.empty()) throw DataError("no samples are tagged 'train'");
  std::set<std::string> wanted(c.train_ids.begin(), c.train_ids.end());
  wanted.insert(c.val_ids.begin(), c.val_ids.end());
  for (const auto& t : extra_tags) {
    for (const auto& id : ids_with_tag(c.manifest, c.tags, t)) wanted.insert(id);
  }
  std::vector<std::string> ids;
  for (const auto& r : c.manifest.samples) {
    if (wanted.count(r.id)) ids.push_back(r.id);
  }
  const auto loaded = load_samples(c.manifest, ids, c.mode);
  for (std::size_t i = 0; i < ids.size(); ++i) c.cache[ids[i]] = loaded[i];
  return c;
}

std::vector<std::shared_ptr<const LoadedSample>> lookup(const SampleCache& cache,
                                                        const std::vector<std::string>& ids) {
  std::vector<std::shared_ptr<const LoadedSample>> out;
  for (const auto& id : ids) out.push_back(cache.at(id));
  return out;
}

metrics::LabelStats fit_train_labels(const std::vector<double>& values, const std::string& label) {
  const auto stats = metrics::fit_labels(values, label);
  if (!(stats.std > 0.0)) {
    throw DataError("label '" + label + "' is constant over the " + std::to_string(values.size()) +
                    " training samples; cannot standardize it");
  }
  return stats;
}

struct RunOutput {
  nn::ModelConfig config;
  nn::TrainResult result;
  metrics::LabelStats stats;
  std::size_t n_train = 0;
  bool val_from_train = false;
};

RunOutput train_once(const TrainArgs& a, const Context& c, double fraction, std::uint64_t seed,
                     std::ostream& log) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("fraction must lie in (0, 1]");
  RunOutput run;
  const auto train_ids = split::subset(c.train_ids, fraction, seed);
  run.n_train = train_ids.size();
  // Without a validation split the run selects on (and stops on) train loss.
  run.val_from_train = c.val_ids.empty();
  const auto& val_ids = run.val_from_train ? train_ids : c.val_ids;
  log << "training on " << train_ids.size() << " samples (" << val_ids.size() << " validation)\n";

  const auto train_raw = label_values(c.manifest, train_ids, c.label);
  run.stats = fit_train_labels(train_raw, c.label);
  const auto train_set = make_dataset(lookup(c.cache, train_ids), c.task, c.mode,
                                      metrics::normalize(train_raw, run.stats));
  const auto val_set = make_dataset(lookup(c.cache, val_ids), c.task, c.mode,
                                    metrics::normalize(label_values(c.manifest, val_ids, c.label), run.stats));

  run.config = build_config({a.preset, a.width, a.groups}, c.task, c.mode);
  nn::Model<float> model(run.config);
  nn::TrainConfig tc;
  tc.batch = a.batch;
  tc.epochs = a.epochs;
  tc.patience = a.patience;
  tc.seed = seed;
  tc.augment = a.augment;
  tc.octahedral_only = a.octahedral;
  tc.lr = a.lr;
  tc.target_train_loss = a.target_loss;
  run.result = nn::train(model, train_set, val_set, tc);
  return run;
}

std::vector<double> predict_raw(const nn::ModelConfig& config, std::span<const float> params,
                                const Context& c, const std::vector<std::string>& ids,
                                const metrics::LabelStats& stats, int batch) {
  nn::Model<float> model(config);
  const auto data = make_dataset(lookup(c.cache, ids), c.task, c.mode, std::vector<double>(ids.size(), 0.0));
  return metrics::denormalize(nn::predict(model, params, data, batch), stats);
}

json train_config_json(const TrainArgs& a) {
  json j = {{"manifest", a.manifest}, {"preset", a.preset},   {"repr", a.repr},
            {"fraction", a.fraction}, {"epochs", a.epochs},   {"patience", a.patience},
            {"batch", a.batch},       {"lr", a.lr},           {"augment", a.augment},
            {"octahedral", a.octahedral}, {"width", a.width}, {"groups", a.groups},
            {"name", a.name}};
  if (a.split_file) j["split_file"] = *a.split_file;
  if (a.label) j["label"] = *a.label;
  if (a.target_loss) j["target_loss"] = *a.target_loss;
  return j;
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

void cmd_train(const TrainArgs& a, RunRecord& rec, std::ostream& log) {
  rec.seed = a.seed;
  rec.config = train_config_json(a);
  if (a.name.empty() || a.name.find_first_of("/\\") != std::string::npos) {
    throw ArgumentError("--name must be a plain file name");
  }
  const OutDirs dirs = make_out_dirs(a.out);
  const Context c = make_context(a, {});
  const RunOutput run = train_once(a, c, a.fraction, a.seed, log);

  json meta;
  meta["preset"] = a.preset;
  meta["task"] = voxel::to_string(c.task);
  meta["repr"] = voxel::to_string(c.mode);
  meta["width"] = a.width;
  meta["groups"] = a.groups;
  meta["label"] = c.label;
  meta["label_mean"] = run.stats.mean;
  meta["label_std"] = run.stats.std;
  meta["seed"] = a.seed;
  meta["fraction"] = a.fraction;
  meta["n_train"] = run.n_train;
  meta["best_epoch"] = run.result.best_epoch;
  meta["manifest"] = fs::absolute(a.manifest).lexically_normal().string();
  if (a.split_file) meta["split_file"] = fs::absolute(*a.split_file).lexically_normal().string();

  const fs::path ckpt_path = dirs.checkpoints / (a.name + ".vxck");
  nn::save_checkpoint({meta.dump(), run.result.params, run.result.adam}, ckpt_path);
  const fs::path history_path = dirs.reports / "history.csv";
  write_text(history_path, nn::history_csv(run.result.history));

  const auto& last = run.result.history.back();
  rec.outputs = {ckpt_path.string(), history_path.string()};
  rec.metrics = {{"n_train", run.n_train},
                 {"epochs_run", run.result.history.size()},
                 {"final_train_loss", last.train_loss},
                 {"best_epoch", run.result.best_epoch},
                 {"best_val_loss", run.result.best_val_loss},
                 {"stopped_early", run.result.stopped_early},
                 {"validation_from_train", run.val_from_train}};
  log << "finished " << run.result.history.size() << " epochs; final train loss " << fmt(last.train_loss)
      << ", best val loss " << fmt(run.result.best_val_loss) << " at epoch " << run.result.best_epoch << "\n";
}

void cmd_eval(const EvalArgs& a, RunRecord& rec, std::ostream& log) {
  rec.config = {{"checkpoint", a.checkpoint}, {"split", a.split}, {"metric", a.metric}};
  if (a.manifest) rec.config["manifest"] = *a.manifest;
  if (a.split_file) rec.config["split_file"] = *a.split_file;
  if (a.metric != "spearman" && a.metric != "mae") {
    throw ArgumentError("unknown metric '" + a.metric + "' (expected spearman or mae)");
  }
  const OutDirs dirs = make_out_dirs(a.out);
  if (!fs::exists(a.checkpoint)) throw DataError("checkpoint '" + a.checkpoint + "' does not exist");
  const nn::Checkpoint ckpt = nn::load_checkpoint(a.checkpoint);
  json meta;
  try {
    meta = json::parse(ckpt.meta_json);
  } catch (const json::exception& e) {
    throw DataError("checkpoint metadata is not valid JSON: " + std::string(e.what()));
  }

  TrainArgs t;
  try {
    t.preset = meta.at("preset").get<std::string>();
    t.repr = meta.at("repr").get<std::string>();
    t.width = meta.at("width").get<int>();
    t.groups = meta.at("groups").get<int>();
    t.label = meta.at("label").get<std::string>();
    t.manifest = a.manifest ? *a.manifest : meta.at("manifest").get<std::string>();
    if (a.split_file) {
      t.split_file = *a.split_file;
    } else if (meta.contains("split_file")) {
      t.split_file = meta["split_file"].get<std::string>();
    }
  } catch (const json::exception& e) {
    throw DataError("checkpoint metadata is incomplete: " + std::string(e.what()));
  }
  const metrics::LabelStats stats{*t.label, meta.at("label_mean").get<double>(), meta.at("label_std").get<double>()};

  Context c;
  c.task = preset_task(t.preset);
  c.mode = voxel::parse_repr(t.repr);
  c.manifest = io::load_manifest(t.manifest);
  c.tags = split_tags(c.manifest, t.split_file ? std::optional<fs::path>(*t.split_file) : std::nullopt);
  c.label = *t.label;
  const auto ids = ids_with_tag(c.manifest, c.tags, a.split);
  if (ids.empty()) throw DataError("no samples are tagged '" + a.split + "'");
  const auto loaded = load_samples(c.manifest, ids, c.mode);
  for (std::size_t i = 0; i < ids.size(); ++i) c.cache[ids[i]] = loaded[i];

  const auto config = build_config({t.preset, t.width, t.groups}, c.task, c.mode);
  if (nn::param_count(config) != ckpt.params.size()) {
    throw DataError("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters but preset '" +
                    t.preset + "' needs " + std::to_string(nn::param_count(config)));
  }
  const auto pred = predict_raw(config, ckpt.params, c, ids, stats, a.batch);
  const auto target = label_values(c.manifest, ids, c.label);
  const double value = compute_metric(a.metric, pred, target);

  json result = {{"checkpoint", a.checkpoint}, {"split", a.split}, {"metric", a.metric},
                 {"label", c.label},           {"n", ids.size()},  {"value", value}};
  const fs::path path = dirs.reports / "metric.json";
  write_text(path, result.dump(2) + "\n");
  rec.outputs = {path.string()};
  rec.metrics = {{a.metric, value}, {"n", ids.size()}};
  log << a.metric << " on " << ids.size() << " '" << a.split << "' samples: " << fmt(value) << "\n";
}

void cmd_curve(const CurveArgs& a, RunRecord& rec, std::ostream& log) {
  rec.config = train_config_json(a.train);
  rec.config.erase("fraction");
  rec.config.erase("name");
  rec.config["fractions"] = a.fractions;
  rec.config["seeds"] = a.seeds;
  rec.config["metric"] = a.metric;
  rec.config["split"] = a.split;
  if (a.fractions.empty() || a.seeds.empty()) throw ArgumentError("--fractions and --seeds must not be empty");
  if (a.metric != "spearman" && a.metric != "mae") {
    throw ArgumentError("unknown metric '" + a.metric + "' (expected spearman or mae)");
  }
  for (double f : a.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ArgumentError("fractions must lie in (0, 1]");
  }
  if (std::set<double>(a.fractions.begin(), a.fractions.end()).size() != a.fractions.size() ||
      std::set<std::uint64_t>(a.seeds.begin(), a.seeds.end()).size() != a.seeds.size()) {
    throw ArgumentError("--fractions and --seeds must not repeat values");
  }
  const OutDirs dirs = make_out_dirs(a.train.out);
  const Context c = make_context(a.train, {a.split});
  const auto eval_ids = ids_with_tag(c.manifest, c.tags, a.split);
  if (eval_ids.empty()) throw DataError("no samples are tagged '" + a.split + "'");
  const auto target = label_values(c.manifest, eval_ids, c.label);

  struct Cell {
    double fraction;
    std::uint64_t seed;
    double value = 0.0;
    std::size_t n_train = 0;
  };
  std::vector<Cell> cells;
  for (double f : a.fractions) {
    for (auto s : a.seeds) cells.push_back({f, s});
  }
  std::mutex log_mu;
  parallel_for(cells.size(), [&](std::size_t i) {
    Cell& cell = cells[i];
    std::ostringstream cell_log;
    const RunOutput run = train_once(a.train, c, cell.fraction, cell.seed, cell_log);
    const auto pred = predict_raw(run.config, run.result.params, c, eval_ids, run.stats, a.train.batch);
    cell.value = compute_metric(a.metric, pred, target);
    cell.n_train = run.n_train;
    std::lock_guard lock(log_mu);
    log << "[fraction " << fmt(cell.fraction) << ", seed " << cell.seed << "] " << cell_log.str() << "  "
        << a.metric << " = " << fmt(cell.value) << "\n";
  });

  std::string csv = "fraction,seed," + a.metric + "\n";
  for (const auto& cell : cells) csv += fmt(cell.fraction) + "," + std::to_string(cell.seed) + "," + fmt(cell.value) + "\n";

  std::vector<CurvePoint> points;
  for (double f : a.fractions) {
    std::vector<double> values;
    for (const auto& cell : cells) {
      if (cell.fraction == f) values.push_back(cell.value);
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    points.push_back({f, mean, sample_std(values), values.size()});
  }
  std::sort(points.begin(), points.end(), [](const auto& x, const auto& y) { return x.fraction < y.fraction; });

  const fs::path csv_path = dirs.reports / "curve.csv";
  const fs::path svg_path = dirs.reports / "curve.svg";
  write_text(csv_path, csv);
  write_text(svg_path, render_curve_svg(points, a.metric, a.train.repr));
  rec.outputs = {csv_path.string(), svg_path.string()};
  json summary = json::array();
  for (const auto& p : points) {
    summary.push_back({{"fraction", p.fraction}, {"mean", p.mean}, {"std", p.std}, {"runs", p.runs}});
  }
  rec.metrics = {{"points", summary}};
}

}  // namespace voxgrid::cli
