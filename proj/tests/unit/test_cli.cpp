#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "ren/data.hpp"
#include "ren/text.hpp"
#include "ren_cli.hpp"

using namespace ren;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ren_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

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

// Small 64x64 frames keep the CLI runs fast.
fs::path small_dataset(const fs::path& dir, int n, int seed) {
  const fs::path spec = dir / "spec.txt";
  text::write_file(spec, "width = 64\nheight = 64\nfx = 110\nfy = 110\ncx = 31.5\ncy = 31.5\n");
  const auto r = run({"gen-data", "--spec", spec.string(), "--n", std::to_string(n), "--seed", std::to_string(seed),
                      "--out", (dir / "data").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  return dir / "data" / "manifest.txt";
}

std::vector<std::string> tiny_run_args(const fs::path& manifest, const fs::path& out) {
  return {"train",          "--manifest", manifest.string(), "--out",      out.string(), "--input_size", "24",
          "--channels",     "2,3,4",      "--fc_width",      "8",          "--regions",  "0:0:2:2;0:1:2:2;1:0:2:2;1:1:2:2",
          "--epochs",       "2",          "--batch_size",    "4",          "--augment",  "true",
          "--seed",         "5"};
}

}  // namespace

TEST_CASE("gen-data writes a deterministic dataset") {
  const auto dir = scratch("gen");
  const fs::path m1 = small_dataset(dir / "a", 10, 3);
  const fs::path m2 = small_dataset(dir / "b", 10, 3);
  const Dataset a = load_dataset(m1);
  const Dataset b = load_dataset(m2);
  REQUIRE(a.size() == 10);
  CHECK(read_manifest(m1).entries.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.frames[i].depth == b.frames[i].depth);
    CHECK(a.poses[i] == b.poses[i]);
  }
  CHECK(fs::exists(dir / "a" / "data" / "config.txt"));
}

TEST_CASE("rf prints the region table") {
  auto r = run({"rf"});
  REQUIRE(r.code == 0);
  const auto lines = text::split(text::trim(r.out), '\n');
  REQUIRE(lines.size() == 10);
  CHECK(lines[0] == "region,row,col,height,width,rows_lo,rows_hi,cols_lo,cols_hi,rf_height,rf_width");
  CHECK(text::split(lines[1], ',')[9] == "62");
  CHECK(text::split(lines[5], ',')[9] == "62");
  CHECK(text::split(lines[5], ',')[10] == "76");
  CHECK(text::split(lines[9], ',')[9] == "76");
  CHECK(text::split(lines[9], ',')[10] == "76");

  r = run({"rf", "--regions", "full"});
  REQUIRE(r.code == 0);
  const auto full = text::split(text::split(text::trim(r.out), '\n')[1], ',');
  CHECK(full[9] == "96");
  CHECK(full[10] == "96");
}

TEST_CASE("input errors exit with code 2") {
  const auto dir = scratch("errors");
  text::write_file(dir / "bad.conf", "learning_rate = 0.1\n");
  auto r = run({"train", "--config", (dir / "bad.conf").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_rate") != std::string::npos);

  r = run({"eval", "--predictions", "x.txt", "--manifest", (dir / "missing.txt").string(), "--out", dir.string()});
  CHECK(r.code == 2);

  std::vector<std::uint8_t> junk{'R', 'D', 'E', 'P', 1, 0, 9};
  write_bytes(dir / "junk.rdep", junk);
  RngStream rng(1);
  ModelConfig mc;
  mc.input_size = 24;
  mc.channels = {2, 3, 4};
  mc.fc_width = 8;
  mc.joints = 2;
  mc.head = HeadKind::Single;
  save_checkpoint(dir / "m.renc", build_model<float>(mc, rng), {});
  r = run({"predict", "--checkpoint", (dir / "m.renc").string(), "--depth", (dir / "junk.rdep").string(),
           "--intrinsics", "100,100,4,4"});
  CHECK(r.code == 2);
  CHECK(r.err.find("offset") != std::string::npos);

  CHECK(run({"rf", "--stack", "conv3,warp2"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"gen-data", "--n", "0", "--out", dir.string()}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("eval of ground truth gives zero error") {
  const auto dir = scratch("eval");
  const fs::path manifest = small_dataset(dir, 4, 2);
  const Dataset ds = load_dataset(manifest);
  std::string lines;
  for (const auto& p : ds.poses) lines += cli::format_pose_line(p) + "\n";
  text::write_file(dir / "gt.txt", lines);
  const auto r = run({"eval", "--predictions", (dir / "gt.txt").string(), "--manifest", manifest.string(), "--out",
                      (dir / "report").string(), "--mp", "--map"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string curve = text::read_file(dir / "report" / "success_curve.csv");
  for (const auto& line : text::split(text::trim(curve), '\n')) {
    if (line.starts_with("threshold")) continue;
    // Zero error is not strictly below a zero threshold.
    const auto cells = text::split(line, ',');
    CHECK(cells[1] == (cells[0] == "0" ? "0" : "1"));
  }
  const std::string summary = text::read_file(dir / "report" / "summary.csv");
  CHECK(summary.find("mean_error_mm,0\n") != std::string::npos);
  CHECK(cli::read_predictions(dir / "report" / "predictions.txt") == ds.poses);
}

TEST_CASE("predict with an explicit center") {
  const auto dir = scratch("predict");
  const fs::path manifest = small_dataset(dir, 1, 4);
  RngStream rng(2);
  ModelConfig mc;
  mc.input_size = 24;
  mc.channels = {2, 3, 4};
  mc.fc_width = 8;
  mc.joints = 16;
  mc.head = HeadKind::Single;
  save_checkpoint(dir / "m.renc", build_model<float>(mc, rng), {});
  const std::string depth = (dir / "data" / "frames" / "000000.rdep").string();
  auto r = run({"predict", "--checkpoint", (dir / "m.renc").string(), "--depth", depth, "--manifest",
                manifest.string(), "--center", "0,0,450", "--out", (dir / "p").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(text::split_ws(r.out).size() == 48);
  const auto cfg = text::read_key_value_file(dir / "p" / "config.txt");
  CHECK(cfg.at("center_source") == "override");
  CHECK(cfg.at("center") == "0,0,450");

  r = run({"predict", "--checkpoint", (dir / "m.renc").string(), "--depth", depth, "--manifest", manifest.string()});
  REQUIRE(r.code == 0);
}

TEST_CASE("ablation ladder changes one key per rung") {
  cli::RunConfig base;
  base.out = "abl";
  const auto rungs = cli::ablation_ladder(base);
  REQUIRE(rungs.size() == 6);
  CHECK(rungs[0].changed_key.empty());
  CHECK(rungs[0].config.model.head == HeadKind::Single);
  CHECK(rungs[0].config.train.loss == LossKind::L2);
  CHECK_FALSE(rungs[0].config.train.augment);
  CHECK(rungs[5].config.model.head == HeadKind::RegionEnsemble);
  for (std::size_t i = 1; i < rungs.size(); ++i) {
    auto prev = rungs[i - 1].config.to_map();
    auto cur = rungs[i].config.to_map();
    prev.erase("out");
    cur.erase("out");
    int differing = 0;
    std::string which;
    for (const auto& [k, v] : cur) {
      if (prev.at(k) != v) {
        ++differing;
        which = k;
      }
    }
    CHECK(differing == 1);
    CHECK(which == rungs[i].changed_key);
  }
  CHECK_THROWS_AS(cli::ablation_ladder(base, "table9"), InputError);
}

TEST_CASE("training through the CLI is reproducible") {
  const auto dir = scratch("train");
  const fs::path manifest = small_dataset(dir, 8, 6);
  auto r1 = run(tiny_run_args(manifest, dir / "r1"));
  REQUIRE_MESSAGE(r1.code == 0, r1.err);
  auto r2 = run(tiny_run_args(manifest, dir / "r2"));
  REQUIRE(r2.code == 0);
  CHECK(read_bytes(dir / "r1" / "model.renc") == read_bytes(dir / "r2" / "model.renc"));
  CHECK(text::read_file(dir / "r1" / "loss.csv") == text::read_file(dir / "r2" / "loss.csv"));
  const auto loss = text::split(text::trim(text::read_file(dir / "r1" / "loss.csv")), '\n');
  CHECK(loss.front() == "epoch,batch,lr,loss");
  CHECK(loss.size() == 1 + 2 * 2);
  const auto cfg = text::read_key_value_file(dir / "r1" / "config.txt");
  CHECK(cfg.at("epochs") == "2");
  CHECK(cfg.at("channels") == "2,3,4");

  auto args = tiny_run_args(manifest, dir / "r3");
  args.back() = "6";
  REQUIRE(run(args).code == 0);
  CHECK(read_bytes(dir / "r1" / "model.renc") != read_bytes(dir / "r3" / "model.renc"));

  const auto ev = run({"eval", "--checkpoint", (dir / "r1" / "model.renc").string(), "--manifest", manifest.string(),
                       "--out", (dir / "ev").string(), "--multiview", "10"});
  CHECK_MESSAGE(ev.code == 0, ev.err);
}
