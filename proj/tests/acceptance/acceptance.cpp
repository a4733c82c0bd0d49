// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ren/data.hpp"
#include "ren/error.hpp"
#include "ren/eval.hpp"
#include "ren/nn.hpp"
#include "ren/synthetic.hpp"
#include "ren/tensor.hpp"
#include "ren/text.hpp"
#include "ren/train.hpp"
#include "ren_cli.hpp"

using namespace ren;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) { return text::format_double(v); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ren_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

std::vector<double> uniform(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  RngStream rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1, double hi = 1) {
  const std::size_t n = shape_numel(shape);
  return Tensor<double>::from(std::move(shape), uniform(n, seed, lo, hi));
}

Tensor<double> probe(const Tensor<double>& t, std::uint64_t seed = 99) {
  return sum(mul(t, Tensor<double>::from(t.shape(), uniform(t.numel(), seed))));
}

// 1 -------------------------------------------------------------------------

Outcome shape_contract() {
  Outcome o;
  ModelConfig c;
  c.architecture = Architecture::BasicResidual;
  c.head = HeadKind::RegionEnsemble;
  c.joints = 16;
  // Zero weights: only shapes matter here, and drawing 81M random values
  // would dominate the run time.
  std::vector<NamedParameter<float>> params;
  for (const auto& p : param_shapes(c)) params.push_back({p.name, Tensor<float>::zeros(p.shape)});
  Model<float> m(c, std::move(params));
  m.set_mode(Mode::Eval);
  const auto x = Tensor<float>::zeros({1, 1, 96, 96});
  const auto f = m.forward_features(x);
  o.expect(f.shape() == Shape{1, 64, 12, 12}, "feature shape " + shape_str(f.shape()));
  RngStream d(0);
  const auto y = m.forward(x, d);
  o.expect(y.shape() == Shape{1, 48}, "output shape " + shape_str(y.shape()));
  o.detail = o.pass ? "features 1x64x12x12, output 1x48" : o.detail;
  return o;
}

// 2 -------------------------------------------------------------------------

Outcome receptive_fields() {
  Outcome o;
  std::string table;
  o.expect(cli({"rf"}, &table) == 0, "rf exited nonzero");
  const auto lines = text::split(text::trim(table), '\n');
  if (lines.size() != 10) {
    o.expect(false, "expected 9 region rows");
    return o;
  }
  // Corners, then edge centers, then the center region.
  const std::vector<std::pair<int, int>> expected = {{62, 62}, {62, 62}, {62, 62}, {62, 62}, {62, 76},
                                                     {76, 62}, {76, 62}, {62, 76}, {76, 76}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto cells = text::split(lines[i + 1], ',');
    const int h = std::stoi(cells[9]);
    const int w = std::stoi(cells[10]);
    o.expect(h == expected[i].first && w == expected[i].second,
             "region " + std::to_string(i) + " is " + cells[9] + "x" + cells[10]);
  }
  if (o.pass) o.detail = "4 corners 62x62, 4 edge centers 62x76/76x62, center 76x76";
  return o;
}

// 3 -------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome o;
  double worst_layer = 0;
  const auto layer = [&](const std::string& name, const LossBuilder& build, std::vector<Tensor<double>> inputs) {
    const double err = grad_check(build, std::move(inputs));
    worst_layer = std::max(worst_layer, err);
    o.expect(err < 1e-6, name + " rel err " + fmt(err));
  };
  using In = const std::vector<Tensor<double>>&;
  for (int stride : {1, 2}) {
    layer("conv2d", [stride](In in) { return probe(conv2d(in[0], in[1], in[2], stride, 1)); },
          {random_tensor({2, 2, 5, 5}, 20), random_tensor({3, 2, 3, 3}, 21), random_tensor({3}, 22)});
  }
  layer("maxpool2d", [](In in) { return probe(maxpool2d(in[0], 2, 2)); }, {random_tensor({2, 2, 6, 6}, 23)});
  auto rv = uniform(20, 24, 0.1, 1.0);
  for (std::size_t i = 0; i < rv.size(); i += 2) rv[i] = -rv[i];
  layer("relu", [](In in) { return probe(relu(in[0])); }, {Tensor<double>::from({20}, rv)});
  layer("linear", [](In in) { return probe(linear(in[0], in[1], in[2])); },
        {random_tensor({3, 2, 2}, 25), random_tensor({5, 4}, 26), random_tensor({5}, 27)});
  layer("dropout",
        [](In in) {
          RngStream rng(4);
          return probe(dropout(in[0], 0.3, true, rng));
        },
        {random_tensor({30}, 28)});
  layer("concat", [](In in) { return probe(concat<double>({in[0], in[1]}, 1)); },
        {random_tensor({2, 3, 2}, 29), random_tensor({2, 1, 2}, 30)});
  layer("slice", [](In in) { return add(probe(slice_region(in[0], 1, 0, 2, 3)), probe(slice_axis(in[0], 1, 1, 1), 7)); },
        {random_tensor({2, 2, 4, 4}, 31)});
  layer("elementwise",
        [](In in) { return add(probe(reshape(average<double>({mul(in[0], in[1]), in[1]}), {6, 2})), mean(in[0])); },
        {random_tensor({3, 4}, 32), random_tensor({3, 4}, 33)});
  // Residuals kept clear of the smooth-L1 breakpoint.
  const std::vector<double> residuals{0.003, -0.004, 0.2, -0.5, 0.0001, 0.05};
  layer("smooth-l1", [](In in) { return smooth_l1(in[0], in[1]); },
        {Tensor<double>::from({2, 3}, residuals), Tensor<double>::zeros({2, 3})});
  layer("l2", [](In in) { return l2_loss(in[0], in[1]); }, {random_tensor({2, 3}, 34), random_tensor({2, 3}, 35)});

  double worst_e2e = 0;
  const auto x = random_tensor({2, 1, 24, 24}, 8);
  const auto target = random_tensor({2, 6}, 9, -0.5, 0.5);
  for (auto arch : {Architecture::Shallow, Architecture::Basic, Architecture::BasicResidual}) {
    for (auto head : {HeadKind::Single, HeadKind::RegionEnsemble, HeadKind::RegionBagging}) {
      ModelConfig c;
      c.architecture = arch;
      c.head = head;
      c.input_size = 24;
      c.channels = {2, 3, 4};
      c.fc_width = 5;
      c.joints = 2;
      c.dropout_rate = 0;
      c.regions = "0:0:2:2;0:1:2:2;1:0:2:2;1:1:2:2";
      RngStream rng(10);
      Model<double> m = build_model<double>(c, rng);
      // Nonzero biases keep relu inputs off the kink.
      for (auto& p : m.parameters()) {
        if (p.tensor.rank() == 1) {
          for (auto& v : p.tensor.mutable_values()) v = rng.uniform(0.05, 0.3);
        }
      }
      std::vector<Tensor<double>> params;
      for (const auto& p : m.parameters()) params.push_back(p.tensor);
      const double err = grad_check(
          [&](In) {
            RngStream d(11);
            return l2_loss(m.forward(x, d), target);
          },
          params);
      worst_e2e = std::max(worst_e2e, err);
      o.expect(err < 1e-4, to_string(arch) + "/" + to_string(head) + " rel err " + fmt(err));
    }
  }
  if (o.pass) o.detail = "worst per-layer " + fmt(worst_layer) + ", worst end-to-end " + fmt(worst_e2e);
  return o;
}

// 4 -------------------------------------------------------------------------

Outcome smooth_l1_values() {
  Outcome o;
  const double below = smooth_l1_value(std::nextafter(0.01, 0.0));
  const double at = smooth_l1_value(0.01);
  o.expect(std::abs(below - at) < 1e-12, "jump at 0.01 of " + fmt(std::abs(below - at)));
  o.expect(std::abs(smooth_l1_value(-0.01) - smooth_l1_value(std::nextafter(-0.01, 0.0))) < 1e-12, "jump at -0.01");
  o.expect(smooth_l1_value(0) == 0, "f(0) = " + fmt(smooth_l1_value(0)));
  o.expect(std::abs(at - 5e-5) < 1e-18, "f(0.01) = " + fmt(at));
  o.expect(std::abs(smooth_l1_value(0.5) - 0.00495) < 1e-18, "f(0.5) = " + fmt(smooth_l1_value(0.5)));
  if (o.pass) o.detail = "f(0)=0, f(0.01)=" + fmt(at) + ", f(0.5)=" + fmt(smooth_l1_value(0.5));
  return o;
}

// 5 -------------------------------------------------------------------------

Outcome optimizer_oracle() {
  Outcome o;
  ModelConfig c;
  c.architecture = Architecture::Shallow;
  c.head = HeadKind::Single;
  c.input_size = 8;
  c.channels = {1, 1, 1};
  c.fc_width = 1;
  c.joints = 1;
  RngStream rng(0);
  Model<double> m = build_model<double>(c, rng);
  for (auto& p : m.parameters()) std::fill(p.tensor.mutable_values().begin(), p.tensor.mutable_values().end(), 1.0);
  auto state = OptimizerState<double>::for_model(m);
  TrainConfig cfg;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0;
  // d(sum of all parameters)/dw = 1 everywhere.
  const auto unit_gradient = [&] {
    Tensor<double> total;
    for (auto& p : m.parameters()) {
      const auto term = sum(p.tensor);
      total = total.defined() ? add(total, term) : term;
    }
    backward(total);
  };
  double v = 0, w = 1;
  std::vector<double> seen;
  for (int step = 0; step < 2; ++step) {
    unit_gradient();
    sgd_step(m, state, 0.1, cfg);
    v = 0.9 * v - 0.1 * 1.0;
    w = w + v;
    for (const auto& p : m.parameters()) {
      for (double x : p.tensor.values()) o.expect(x == w, "step " + std::to_string(step + 1) + " weight " + fmt(x));
    }
    seen.push_back(m.parameters()[0].tensor.values()[0]);
  }
  o.expect(std::abs(seen[0] - 0.9) < 1e-15 && std::abs(seen[1] - 0.71) < 1e-15, "trajectory off 1 -> 0.9 -> 0.71");

  TrainConfig sched;
  const double l0 = lr_at(0, sched), l20 = lr_at(20, sched), l79 = lr_at(79, sched);
  o.expect(l0 == 0.005, "lr_at(0) = " + fmt(l0));
  o.expect(l20 == 0.0005, "lr_at(20) = " + fmt(l20));
  o.expect(l79 == 5e-6, "lr_at(79) = " + fmt(l79));
  if (o.pass) {
    o.detail = "w 1 -> " + fmt(seen[0]) + " -> " + fmt(seen[1]) + "; lr " + fmt(l0) + " / " + fmt(l20) + " / " + fmt(l79);
  }
  return o;
}

// 6 and 10 ------------------------------------------------------------------

struct Fixture {
  fs::path root;
  fs::path manifest;
};

Fixture overfit_fixture() {
  Fixture f;
  f.root = scratch("overfit");
  // 64 default-hand frames, seed 7.
  if (cli({"gen-data", "--n", "64", "--seed", "7", "--out", (f.root / "data").string()}) != 0) {
    throw Error("could not generate the overfit fixture");
  }
  f.manifest = f.root / "data" / "manifest.txt";
  return f;
}

double overfit_seconds = 0;

Outcome overfit(const Fixture& fx) {
  Outcome o;
  const std::string conf = std::string(REN_FIXTURE_DIR) + "/overfit.conf";
  std::vector<double> times;
  for (const char* run : {"run1", "run2"}) {
    const auto t0 = Clock::now();
    const int code = cli({"train", "--config", conf, "--manifest", fx.manifest.string(), "--out", (fx.root / run).string()});
    times.push_back(seconds_since(t0));
    o.expect(code == 0, std::string(run) + " exited " + std::to_string(code));
    if (code != 0) return o;
  }
  overfit_seconds = times.front();
  const Checkpoint ck = load_checkpoint(fx.root / "run1" / "model.renc");
  const Dataset ds = load_dataset(fx.manifest);
  const double err = mean_3d_error(predict_frames(ck.model, ds.frames, ck.crop), ds.poses).overall;
  o.expect(err < 3.0, "training-set mean error " + fmt(err) + " mm");
  o.expect(read_bytes(fx.root / "run1" / "model.renc") == read_bytes(fx.root / "run2" / "model.renc"),
           "checkpoints differ between runs");
  o.expect(text::read_file(fx.root / "run1" / "loss.csv") == text::read_file(fx.root / "run2" / "loss.csv"),
           "loss logs differ between runs");
  o.expect(times.front() < 600, "one training run took " + fmt(times.front()) + " s");
  o.detail = (o.pass ? "" : o.detail + "; ") + "mean error " + fmt(err) + " mm after 300 epochs, " + fmt(times.front()) +
             " s per run, repeat run byte-identical";
  return o;
}

Outcome determinism(const Fixture& fx) {
  Outcome o;
  const std::string conf = std::string(REN_FIXTURE_DIR) + "/overfit.conf";
  // Augmentation on, so every random stream is exercised.
  const auto t0 = Clock::now();
  for (const char* run : {"det1", "det2"}) {
    const int code = cli({"train", "--config", conf, "--manifest", fx.manifest.string(), "--out",
                          (fx.root / run).string(), "--epochs", "20", "--augment", "true", "--dropout", "0.5",
                          "--base_lr", "0.05", "--seed", "17"});
    o.expect(code == 0, std::string(run) + " exited " + std::to_string(code));
    if (code != 0) return o;
  }
  const double elapsed = seconds_since(t0);
  const auto ck1 = read_bytes(fx.root / "det1" / "model.renc");
  const auto ck2 = read_bytes(fx.root / "det2" / "model.renc");
  const auto loss1 = text::read_file(fx.root / "det1" / "loss.csv");
  o.expect(ck1 == ck2, "checkpoints differ");
  o.expect(loss1 == text::read_file(fx.root / "det2" / "loss.csv"), "loss CSVs differ");
  auto cfg1 = text::read_key_value_file(fx.root / "det1" / "config.txt");
  auto cfg2 = text::read_key_value_file(fx.root / "det2" / "config.txt");
  cfg1.erase("out");
  cfg2.erase("out");
  o.expect(cfg1 == cfg2, "resolved configs differ");
  o.expect(overfit_seconds == 0 || elapsed < 2 * overfit_seconds,
           "took " + fmt(elapsed) + " s against a budget of " + fmt(2 * overfit_seconds) + " s");
  if (o.pass) {
    o.detail = "two augmented 20-epoch runs byte-identical (" + std::to_string(ck1.size()) + " checkpoint bytes, " +
               std::to_string(loss1.size()) + " loss bytes) in " + fmt(elapsed) + " s";
  }
  return o;
}

// 7 -------------------------------------------------------------------------

std::vector<Pose> random_poses(std::size_t frames, std::size_t joints, RngStream& rng, double spread) {
  std::vector<Pose> out(frames);
  for (auto& p : out) {
    p.joints.resize(joints);
    for (auto& j : p.joints) j = {rng.uniform(-spread, spread), rng.uniform(-spread, spread), rng.uniform(300, 500)};
  }
  return out;
}

Outcome metric_oracles() {
  Outcome o;
  RngStream rng(2024);
  const std::size_t F = 50, J = 16;
  const std::vector<int> tips{3, 6, 9, 12, 15};
  for (int trial = 0; trial < 5; ++trial) {
    const auto gts = random_poses(F, J, rng, 100);
    auto preds = gts;
    for (auto& p : preds) {
      for (auto& j : p.joints) j = j + Vec3{rng.normal() * 12, rng.normal() * 12, rng.normal() * 12};
    }
    std::vector<std::vector<double>> e(F, std::vector<double>(J));
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t j = 0; j < J; ++j) {
        const Vec3 d = preds[f].joints[j] - gts[f].joints[j];
        e[f][j] = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
      }
    }
    const JointErrors errs = mean_3d_error(preds, gts);
    double total = 0;
    for (std::size_t j = 0; j < J; ++j) {
      double s = 0;
      for (std::size_t f = 0; f < F; ++f) s += e[f][j];
      total += s;
      o.expect(std::abs(errs.per_joint[j] - s / F) < 1e-9, "per-joint error mismatch");
    }
    o.expect(std::abs(errs.overall - total / (F * J)) < 1e-9, "overall error mismatch");

    const auto curve = success_frame_curve(preds, gts);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      std::size_t ok = 0;
      for (std::size_t f = 0; f < F; ++f) ok += *std::max_element(e[f].begin(), e[f].end()) < curve[i].threshold_mm;
      o.expect(std::abs(curve[i].fraction - static_cast<double>(ok) / F) < 1e-9, "success curve mismatch");
      if (i > 0) o.expect(curve[i].fraction >= curve[i - 1].fraction, "success curve not monotone");
    }

    const auto rate = [&](std::size_t j, double thr) {
      std::size_t ok = 0;
      for (std::size_t f = 0; f < F; ++f) ok += e[f][j] < thr;
      return static_cast<double>(ok) / F;
    };
    double mp = 0;
    for (int t : tips) mp += rate(static_cast<std::size_t>(t), 15);
    o.expect(std::abs(mean_precision_fingertips(preds, gts, tips, 15) - mp / tips.size()) < 1e-9, "mP mismatch");
    const auto map = mean_average_precision(preds, gts, 20);
    double m = 0;
    for (std::size_t j = 0; j < J; ++j) {
      o.expect(std::abs(map.per_joint[j] - rate(j, 20)) < 1e-9, "detection rate mismatch");
      m += rate(j, 20);
    }
    o.expect(std::abs(map.mean - m / J) < 1e-9, "mAP mismatch");

    const JointErrors zero = mean_3d_error(gts, gts);
    o.expect(zero.overall == 0, "pred = gt error " + fmt(zero.overall));
    const auto perfect = success_frame_curve(gts, gts);
    for (const auto& p : perfect) {
      if (p.threshold_mm > 0) o.expect(p.fraction == 1.0, "pred = gt curve below 1");
    }
    o.expect(mean_precision_fingertips(gts, gts, tips, 15) == 1.0, "pred = gt mP below 1");
    o.expect(mean_average_precision(gts, gts, 100).mean == 1.0, "pred = gt mAP below 1");
  }
  if (o.pass) o.detail = "5 random 50-frame fixtures match brute force to 1e-9; pred = gt gives 0 mm and rate 1";
  return o;
}

// 8 -------------------------------------------------------------------------

Outcome ensemble_baselines() {
  Outcome o;
  DepthFrame frame(64, 64, {110, 110, 31.5, 31.5});
  for (int y = 16; y < 48; ++y) {
    for (int x = 16; x < 48; ++x) frame.at(x, y) = static_cast<std::uint16_t>(420 + x % 7);
  }
  const Vec3 center = segment_and_center(frame);
  const CropExtent extent = CropExtent::hand();

  ModelConfig c;
  c.input_size = 24;
  c.channels = {2, 3, 4};
  c.fc_width = 8;
  c.joints = 3;
  c.regions = "0:0:2:2;0:1:2:2;1:0:2:2;1:1:2:2";
  RngStream rng(5);
  const Model<float> model = build_model<float>(c, rng);
  const PatchPredictor predictor = model_predictor(model);

  const auto single = denormalize_labels(predictor(crop_patch(frame, center, extent, 24)), center, extent);
  const auto zero = multiview_predict(predictor, frame, center, extent, 24, 0);
  o.expect(zero.pose == single, "d = 0 differs from the single view");

  const std::vector<double> constant{0.2, -0.1, 0.05, -0.3, 0.4, 0.0, 0.0, 0.0, -0.25};
  const PatchPredictor fixed = [&](const PatchSample&) { return constant; };
  const auto grid = multiview_predict(fixed, frame, center, extent, 24);
  const auto expect = denormalize_labels(constant, center, extent);
  double worst = 0;
  for (std::size_t j = 0; j < 3; ++j) worst = std::max(worst, norm(grid.pose.joints[j] - expect.joints[j]));
  o.expect(grid.views_used == 9, std::to_string(grid.views_used) + " views used");
  o.expect(worst < 1e-9, "offset grid leaves " + fmt(worst) + " mm");

  const PatchSample patch = crop_patch(frame, center, extent, 24);
  const Pose one = bagging_predict({&model}, patch);
  o.expect(bagging_predict({&model, &model, &model}, patch) == one, "bagging identical models changes the output");
  o.expect(one == single, "bagging one model differs from the model");
  if (o.pass) o.detail = "d = 0 bit-exact, offset grid residual " + fmt(worst) + " mm, bagging bit-exact";
  return o;
}

// 9 -------------------------------------------------------------------------

Outcome format_round_trips() {
  Outcome o;
  const Dataset ds = generate_synthetic(SyntheticHandSpec::default_hand(), 3, RngStream(9));
  const auto dir = scratch("formats");
  const fs::path manifest = write_dataset(dir, ds);
  const Dataset back = load_dataset(manifest);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    o.expect(back.frames[i].depth == ds.frames[i].depth, "depth frame changed");
    o.expect(back.poses[i] == ds.poses[i], "pose changed");
  }
  o.expect(back.config == ds.config, "dataset config changed");
  const auto depth_bytes = encode_depth_file(ds.frames[0]);
  o.expect(encode_depth_file(decode_depth_file(depth_bytes)) == depth_bytes, "depth file re-encode differs");
  const DatasetManifest m = read_manifest(manifest);
  o.expect(parse_manifest(format_manifest(m)) == m, "manifest re-parse differs");

  ModelConfig c;
  c.input_size = 24;
  c.channels = {2, 3, 4};
  c.fc_width = 8;
  c.joints = 16;
  c.regions = "0:0:2:2;0:1:2:2;1:0:2:2;1:1:2:2";
  RngStream rng(3);
  Model<float> model = build_model<float>(c, rng);
  for (auto& p : model.parameters()) {
    for (auto& v : p.tensor.mutable_values()) v = static_cast<float>(rng.normal());
  }
  const CropSettings crop{{75, 75, 75}, 120, 900};
  const auto bytes = encode_checkpoint(model, crop);
  const Checkpoint ck = decode_checkpoint(bytes);
  o.expect(encode_checkpoint(ck.model, ck.crop) == bytes, "checkpoint re-encode differs");
  const auto before = predict_frames(model, ds.frames, crop);
  const auto after = predict_frames(ck.model, ds.frames, ck.crop);
  o.expect(before == after, "reloaded model predicts differently");

  std::size_t rejected = 0;
  for (std::size_t at : {std::size_t{20}, bytes.size() / 2, bytes.size() - 9}) {
    auto bad = bytes;
    bad[at] ^= 0x10;
    try {
      decode_checkpoint(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  o.expect(rejected == 3, "only " + std::to_string(rejected) + " of 3 corrupted checkpoints rejected");
  if (o.pass) o.detail = "depth, manifest and " + std::to_string(bytes.size()) + "-byte checkpoint round trip; corruption rejected";
  return o;
}

// 11 ------------------------------------------------------------------------

Outcome ablation(const Fixture& fx) {
  Outcome o;
  const std::string conf = std::string(REN_FIXTURE_DIR) + "/ablation.conf";
  const fs::path out = fx.root / "ablation";
  std::string csv;
  const int code = cli({"ablate", "--config", conf, "--manifest", fx.manifest.string(), "--out", out.string()}, &csv);
  o.expect(code == 0, "ablate exited " + std::to_string(code));
  if (code != 0) return o;
  const auto rows = text::split(text::trim(csv), '\n');
  o.expect(rows.size() == 7, std::to_string(rows.size() - 1) + " rungs");
  std::string errors;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto cells = text::split(rows[i], ',');
    const double e = text::parse_double(cells.back(), "mean_error_mm");
    o.expect(std::isfinite(e), "rung " + cells[1] + " error not finite");
    errors += (errors.empty() ? "" : " ") + cells[1] + "=" + cells.back();
  }
  const auto base = cli::resolve_run_config(conf, {});
  const auto rungs = cli::ablation_ladder(base);
  for (std::size_t i = 1; i < rungs.size(); ++i) {
    auto prev = rungs[i - 1].config.to_map();
    auto cur = rungs[i].config.to_map();
    int changed = 0;
    for (const auto& [k, v] : cur) changed += k != "out" && prev.at(k) != v;
    o.expect(changed == 1, rungs[i].name + " changes " + std::to_string(changed) + " keys");
  }
  o.expect(fs::exists(out / "ablation.csv"), "ablation.csv missing");
  if (o.pass) o.detail = "6 rungs, one key apart; errors (mm, reported only): " + errors;
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  const auto report = [&](int id, const std::string& name, double budget_s, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    const double elapsed = seconds_since(t0);
    if (budget_s > 0 && elapsed > budget_s) {
      o.pass = false;
      o.detail += "; over the " + fmt(budget_s) + " s budget";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << name << " (" << fmt(std::round(elapsed * 100) / 100)
              << " s): " << o.detail << std::endl;
  };

  report(1, "shape contract", 1, shape_contract);
  report(2, "receptive fields", 1, receptive_fields);
  report(3, "gradient suite", 120, gradient_suite);
  report(4, "smooth-l1", 1, smooth_l1_values);
  report(5, "optimizer oracle", 1, optimizer_oracle);
  std::optional<Fixture> fx;
  try {
    fx = overfit_fixture();
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
  }
  const auto with_fixture = [&](Outcome (*fn)(const Fixture&)) {
    return [&fx, fn] {
      if (!fx) throw Error("fixture unavailable");
      return fn(*fx);
    };
  };
  report(6, "overfit fixture", 1200, with_fixture(overfit));
  report(7, "metric oracles", 5, metric_oracles);
  report(8, "ensemble baselines", 5, ensemble_baselines);
  report(9, "format round trips", 5, format_round_trips);
  report(10, "determinism", 0, with_fixture(determinism));
  report(11, "ablation plumbing", 0, with_fixture(ablation));
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
