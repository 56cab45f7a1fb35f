#include <gtest/gtest.h>

#include <regex>
#include <sstream>

#include "json.hpp"
#include "test_support.hpp"
#include "voxgrid/cli.hpp"
#include "voxgrid/density_io.hpp"

using namespace voxgrid;
using nlohmann::json;
using testutil::read_file;
using testutil::TempDir;
using testutil::write_file;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

// Synthetic molecules in dir/data plus a split file in dir/split.
void make_molecules(const TempDir& dir, int count, bool density = false) {
  std::vector<std::string> gen{"gen-synthetic", "--task", "molecule", "--count", std::to_string(count),
                               "--seed", "3", "--out", (dir / "data").string()};
  if (density) gen.push_back("--with-density");
  ASSERT_EQ(run(gen).code, 0);
  ASSERT_EQ(run({"split", "--manifest", (dir / "data/manifest.json").string(), "--fractions", "0.5,0.25,0.25",
                 "--seed", "1", "--out", (dir / "split").string()})
                .code,
            0);
}

std::vector<std::string> train_args(const TempDir& dir, const std::string& out) {
  return {"train", "--manifest", (dir / "data/manifest.json").string(), "--split",
          (dir / "split/reports/split.json").string(), "--preset", "qm9_tiny", "--repr", "shape", "--width", "4",
          "--groups", "4", "--epochs", "2", "--batch", "4", "--lr", "1e-3", "--seed", "5", "--out",
          (dir / out).string()};
}

}  // namespace

TEST(Cli, HelpAndUnknownCommand) {
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitDataError);
  EXPECT_EQ(run({"train", "--manifest", "x"}).code, cli::kExitDataError);
}

TEST(Cli, VoxelizeMoleculesShapeOnly) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "3", "--out", (dir / "data").string()}).code, 0);
  const auto r = run({"voxelize", "--manifest", (dir / "data/manifest.json").string(), "--repr", "shape", "--task",
                      "molecule", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto index = read_json(dir / "out/grids/index.json");
  ASSERT_EQ(index["samples"].size(), 3u);
  EXPECT_EQ(index["channel_blocks"], json({1}));
  for (const auto& s : index["samples"]) {
    const auto f = io::read_voxb(dir / "out" / s["file"].get<std::string>());
    EXPECT_EQ(f.grid.channels(), 1);
    EXPECT_EQ(f.grid.dims().nx, 32);
    EXPECT_EQ(f.grid.geometry().spacing, 0.25);
  }
  const auto record = read_json(dir / "out/reports/run_voxelize.json");
  EXPECT_EQ(record["status"], "ok");
  EXPECT_EQ(record["metrics"]["samples"], 3);
  EXPECT_TRUE(record.contains("wall_time_s"));
}

TEST(Cli, VoxelizeComplexAtomTypeBlocks) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "complex", "--count", "2", "--out", (dir / "data").string()}).code, 0);
  const auto r = run({"voxelize", "--manifest", (dir / "data/manifest.json").string(), "--repr", "atomtype",
                      "--task", "complex", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto index = read_json(dir / "out/grids/index.json");
  EXPECT_EQ(index["channel_blocks"], json({7, 4}));
  const auto f = io::read_voxb(dir / "out" / index["samples"][0]["file"].get<std::string>());
  EXPECT_EQ(f.grid.channels(), 11);
  EXPECT_EQ(f.grid.dims().nx, 64);
  EXPECT_EQ(f.tag, "atomtype;blocks=7,4");
}

TEST(Cli, DensityModeWithoutMapsNamesTheField) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "2", "--out", (dir / "data").string()}).code, 0);
  const auto r = run({"voxelize", "--manifest", (dir / "data/manifest.json").string(), "--repr", "gradmag",
                      "--task", "molecule", "--out", (dir / "out").string()});
  EXPECT_EQ(r.code, cli::kExitDataError);
  EXPECT_NE(r.err.find("'density'"), std::string::npos) << r.err;
  EXPECT_EQ(read_json(dir / "out/reports/run_voxelize.json")["status"], "error");
}

TEST(Cli, SynthDensityThenGradMag) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "2", "--out", (dir / "data").string()}).code, 0);
  ASSERT_EQ(run({"synth-density", "--manifest", (dir / "data/manifest.json").string(), "--task", "molecule",
                 "--out", (dir / "dens").string()})
                .code,
            0);
  const auto r = run({"voxelize", "--manifest", (dir / "dens/manifest.json").string(), "--repr", "gradmag",
                      "--task", "molecule", "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_json(dir / "out/grids/index.json")["samples"].size(), 2u);
}

TEST(Cli, SplitHitsFractionsAndIsReproducible) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "100", "--out", (dir / "data").string()}).code, 0);
  const std::vector<std::string> args{"split", "--manifest", (dir / "data/manifest.json").string(), "--seed", "4",
                                      "--out", (dir / "a").string()};
  ASSERT_EQ(run(args).code, 0);
  const auto doc = read_json(dir / "a/reports/split.json");
  EXPECT_EQ(doc["counts"], json({{"train", 80}, {"val", 10}, {"test", 10}}));
  EXPECT_TRUE(read_json(dir / "a/reports/leakage.json")["violations"].empty());
  auto again = args;
  again.back() = (dir / "b").string();
  ASSERT_EQ(run(again).code, 0);
  EXPECT_EQ(read_file(dir / "a/reports/split.json"), read_file(dir / "b/reports/split.json"));
}

TEST(Cli, SplitComplexesWithoutLeakage) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "complex", "--count", "60", "--out", (dir / "data").string()}).code, 0);
  write_file(dir / "pins.txt", "# forced into test\ncpx00007\n");
  const auto r = run({"split", "--manifest", (dir / "data/manifest.json").string(), "--pinned",
                      (dir / "pins.txt").string(), "--out", (dir / "s").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto leak = read_json(dir / "s/reports/leakage.json");
  EXPECT_TRUE(leak["checked"].get<bool>());
  EXPECT_TRUE(leak["violations"].empty());
  const auto doc = read_json(dir / "s/reports/split.json");
  EXPECT_EQ(doc["assignment"]["cpx00007"], "test");
  const auto& c = doc["counts"];
  EXPECT_EQ(c["train"].get<int>() + c["val"].get<int>() + c["test"].get<int>(), 60);
}

TEST(Cli, UnknownPinIsADataError) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "10", "--out", (dir / "data").string()}).code, 0);
  write_file(dir / "pins.txt", "ghost\n");
  const auto r = run({"split", "--manifest", (dir / "data/manifest.json").string(), "--pinned",
                      (dir / "pins.txt").string(), "--out", (dir / "s").string()});
  EXPECT_EQ(r.code, cli::kExitDataError);
  EXPECT_NE(r.err.find("ghost"), std::string::npos) << r.err;
}

TEST(Cli, TrainWritesCheckpointHistoryAndRecord) {
  TempDir dir;
  make_molecules(dir, 12);
  const auto r = run(train_args(dir, "t"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "t/checkpoints/model.vxck"));
  const auto history = read_file(dir / "t/reports/history.csv");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  const auto record = read_json(dir / "t/reports/run_train.json");
  EXPECT_EQ(record["status"], "ok");
  EXPECT_EQ(record["seed"], 5);
  EXPECT_NE(r.out.find("training on 6 samples"), std::string::npos) << r.out;
}

TEST(Cli, SmallestFractionKeepsTenOfAThousand) {
  TempDir dir;
  ASSERT_EQ(run({"gen-synthetic", "--task", "molecule", "--count", "1004", "--out", (dir / "data").string()}).code,
            0);
  json split{{"assignment", json::object()}};
  const auto manifest = read_json(dir / "data/manifest.json");
  for (std::size_t i = 0; i < manifest["samples"].size(); ++i) {
    split["assignment"][manifest["samples"][i]["id"].get<std::string>()] = i < 1000 ? "train" : "val";
  }
  write_file(dir / "split.json", split.dump());
  const auto r = run({"train", "--manifest", (dir / "data/manifest.json").string(), "--split",
                      (dir / "split.json").string(), "--preset", "qm9_tiny", "--repr", "shape", "--width", "4",
                      "--groups", "4", "--epochs", "1", "--fraction", "0.01", "--out", (dir / "t").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("training on 10 samples (4 validation)"), std::string::npos) << r.out;
}

TEST(Cli, DivergenceExitsWithNumericalCode) {
  TempDir dir;
  make_molecules(dir, 12);
  auto args = train_args(dir, "t");
  args[std::find(args.begin(), args.end(), "--lr") - args.begin() + 1] = "1e30";
  args[std::find(args.begin(), args.end(), "--epochs") - args.begin() + 1] = "5";
  const auto r = run(args);
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.err;
  const auto record = read_json(dir / "t/reports/run_train.json");
  EXPECT_EQ(record["status"], "numerical_error");
  EXPECT_GE(record["epoch"].get<int>(), 1);
}

TEST(Cli, EvalIsDeterministicAndReportsMetric) {
  TempDir dir;
  make_molecules(dir, 12);
  ASSERT_EQ(run(train_args(dir, "t")).code, 0);
  const std::string ckpt = (dir / "t/checkpoints/model.vxck").string();
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--split", "train", "--metric", "mae", "--out", (dir / "e1").string()})
                .code,
            0);
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--split", "train", "--metric", "mae", "--out", (dir / "e2").string()})
                .code,
            0);
  const auto a = read_file(dir / "e1/reports/metric.json");
  EXPECT_EQ(a, read_file(dir / "e2/reports/metric.json"));
  const auto m = json::parse(a);
  EXPECT_EQ(m["n"], 6);
  EXPECT_EQ(m["metric"], "mae");
  EXPECT_GT(m["value"].get<double>(), 0.0);
}

TEST(Cli, EvalMissingCheckpointIsADataError) {
  TempDir dir;
  const auto r = run({"eval", "--checkpoint", (dir / "nope.vxck").string(), "--out", (dir / "e").string()});
  EXPECT_EQ(r.code, cli::kExitDataError);
  EXPECT_NE(r.err.find("nope.vxck"), std::string::npos) << r.err;
}

TEST(Cli, CurveWritesOneRowPerCellAndMatchingSvg) {
  TempDir dir;
  make_molecules(dir, 16);
  auto args = train_args(dir, "c");
  args[0] = "curve";
  args.erase(std::find(args.begin(), args.end(), "--seed"), std::find(args.begin(), args.end(), "--seed") + 2);
  args[std::find(args.begin(), args.end(), "--epochs") - args.begin() + 1] = "1";
  args.insert(args.end(), {"--fractions", "0.5,1", "--seeds", "1,2,3", "--metric", "mae"});
  const auto r = run(args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream csv(read_file(dir / "c/reports/curve.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "fraction,seed,mae");
  std::map<double, std::vector<double>> by_fraction;
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    double f, s, v;
    ASSERT_EQ(std::sscanf(line.c_str(), "%lf,%lf,%lf", &f, &s, &v), 3) << line;
    by_fraction[f].push_back(v);
  }
  EXPECT_EQ(rows, 6);
  const std::string svg = read_file(dir / "c/reports/curve.svg");
  const std::regex point(R"re(data-fraction="([^"]+)" data-mean="([^"]+)")re");
  int points = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), point); it != std::sregex_iterator(); ++it) {
    ++points;
    const auto& runs = by_fraction.at(std::stod((*it)[1]));
    double mean = 0;
    for (double v : runs) mean += v / runs.size();
    EXPECT_NEAR(std::stod((*it)[2]), mean, 1e-12);
  }
  EXPECT_EQ(points, 2);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

TEST(Cli, CurveWithSinglePoint) {
  TempDir dir;
  make_molecules(dir, 12);
  auto args = train_args(dir, "c");
  args[0] = "curve";
  args.erase(std::find(args.begin(), args.end(), "--seed"), std::find(args.begin(), args.end(), "--seed") + 2);
  args[std::find(args.begin(), args.end(), "--epochs") - args.begin() + 1] = "1";
  args.insert(args.end(), {"--fractions", "1", "--seeds", "7"});
  ASSERT_EQ(run(args).code, 0);
  const std::string svg = read_file(dir / "c/reports/curve.svg");
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(svg.find("data-std=\"0\""), std::string::npos);
}

TEST(Cli, CurveRejectsDuplicateSeeds) {
  TempDir dir;
  make_molecules(dir, 12);
  auto args = train_args(dir, "c");
  args[0] = "curve";
  args.erase(std::find(args.begin(), args.end(), "--seed"), std::find(args.begin(), args.end(), "--seed") + 2);
  args.insert(args.end(), {"--seeds", "1,1"});
  EXPECT_EQ(run(args).code, cli::kExitDataError);
}
