#include "ren_cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "ren/error.hpp"
#include "ren/geometry.hpp"
#include "ren/synthetic.hpp"
#include "ren/text.hpp"

namespace ren::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kInitStream = 0x494e4954;

const std::vector<std::string> kModelKeys = {"architecture", "head",     "regions",   "fc_width",
                                             "dropout",      "channels", "input_size"};
const std::vector<std::string> kRunKeys = {"manifest", "eval_manifest", "out", "checkpoint_every"};

bool contains(const std::vector<std::string>& v, const std::string& key) {
  return std::find(v.begin(), v.end(), key) != v.end();
}

Vec3 parse_vec3(const std::string& s, const char* what) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 3) throw InputError(std::string(what) + " must be x,y,z");
  return {text::parse_double(parts[0], what), text::parse_double(parts[1], what), text::parse_double(parts[2], what)};
}

CameraIntrinsics parse_intrinsics(const std::string& s) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 4) throw InputError("--intrinsics must be fx,fy,cx,cy");
  CameraIntrinsics k{text::parse_double(parts[0], "fx"), text::parse_double(parts[1], "fy"),
                     text::parse_double(parts[2], "cx"), text::parse_double(parts[3], "cy")};
  k.validate();
  return k;
}

CropSettings crop_of(const DatasetConfig& c) { return {c.extent, c.near_mm, c.far_mm}; }

std::string epoch_checkpoint_name(int epoch) {
  std::string digits = std::to_string(epoch);
  return "model_epoch" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits + ".renc";
}

void write_resolved(const fs::path& dir, const std::map<std::string, std::string>& kv) {
  text::write_file(dir / "config.txt", text::format_key_values(kv));
}

// Overrides collected from "--key value" options that CLI11 filled in.
std::map<std::string, std::string> given(const std::map<std::string, std::string>& slots,
                                         const std::map<std::string, CLI::Option*>& options) {
  std::map<std::string, std::string> out;
  for (const auto& [key, opt] : options) {
    if (opt->count() > 0) out[key] = slots.at(key);
  }
  return out;
}

void add_config_overrides(CLI::App* sub, std::map<std::string, std::string>& slots,
                          std::map<std::string, CLI::Option*>& options, const std::vector<std::string>& keys) {
  for (const auto& key : keys) slots[key];
  for (const auto& key : keys) options[key] = sub->add_option("--" + key, slots[key], "Override config key " + key);
}

// train ----------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::map<std::string, std::string> slots;
  std::map<std::string, CLI::Option*> options;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig rc = resolve_run_config(a.config, given(a.slots, a.options));
  const TrainOutcome t = run_training(rc, err);
  out << "trained " << rc.train.total_epochs << " epochs, " << t.history.size() << " batches, final loss "
      << text::format_double(t.history.back().loss) << "\n";
  out << "checkpoint " << (fs::path(rc.out) / "model.renc").string() << "\n";
  return 0;
}

// eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::vector<std::string> bag;
  std::string predictions;
  std::string manifest;
  std::string out;
  bool mp = false;
  double mp_threshold = 15;
  bool map = false;
  double map_threshold = 100;
  double multiview = -1;
  CLI::Option* multiview_opt = nullptr;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const int sources = (!a.checkpoint.empty()) + (!a.bag.empty()) + (!a.predictions.empty());
  if (sources != 1) throw InputError("eval needs exactly one of --checkpoint, --bag or --predictions");
  const bool multiview = a.multiview_opt->count() > 0;
  if (multiview && a.checkpoint.empty()) throw InputError("--multiview requires --checkpoint");

  const Dataset ds = load_dataset(a.manifest);
  std::vector<Pose> preds;
  std::map<std::string, std::string> resolved{{"manifest", a.manifest}, {"out", a.out}};
  if (!a.predictions.empty()) {
    preds = read_predictions(a.predictions);
    resolved["predictions"] = a.predictions;
    if (preds.size() != ds.size()) {
      throw InputError("predictions file has " + std::to_string(preds.size()) + " poses for " +
                       std::to_string(ds.size()) + " frames");
    }
  } else if (!a.checkpoint.empty()) {
    resolved["checkpoint"] = a.checkpoint;
    const Checkpoint ck = load_checkpoint(a.checkpoint);
    if (ck.model.config().joints != ds.config.joints) {
      throw InputError("checkpoint predicts " + std::to_string(ck.model.config().joints) + " joints, dataset has " +
                       std::to_string(ds.config.joints));
    }
    if (multiview) {
      resolved["multiview"] = text::format_double(a.multiview);
      const PatchPredictor predictor = model_predictor(ck.model);
      int failed = 0;
      for (const auto& frame : ds.frames) {
        const Vec3 center = segment_and_center(frame, ck.crop.near_mm, ck.crop.far_mm);
        auto r = multiview_predict(predictor, frame, center, ck.crop.extent, ck.model.config().input_size,
                                   a.multiview);
        failed += r.views_failed;
        preds.push_back(std::move(r.pose));
      }
      if (failed > 0) err << "multiview: " << failed << " views skipped in total\n";
    } else {
      preds = predict_frames(ck.model, ds.frames, ck.crop);
    }
  } else {
    std::vector<Checkpoint> models;
    std::string joined;
    for (const auto& path : a.bag) {
      models.push_back(load_checkpoint(path));
      joined += (joined.empty() ? "" : ",") + path;
    }
    resolved["bag"] = joined;
    std::vector<const Model<float>*> ptrs;
    for (const auto& m : models) {
      if (m.model.config().input_size != models.front().model.config().input_size || !(m.crop == models.front().crop)) {
        throw InputError("bagged checkpoints must share input size and crop settings");
      }
      if (m.model.config().joints != ds.config.joints) throw InputError("bagged checkpoint joint count mismatch");
      ptrs.push_back(&m.model);
    }
    const CropSettings& crop = models.front().crop;
    for (const auto& frame : ds.frames) {
      const Vec3 center = segment_and_center(frame, crop.near_mm, crop.far_mm);
      const PatchSample patch = crop_patch(frame, center, crop.extent, models.front().model.config().input_size);
      preds.push_back(bagging_predict(ptrs, patch));
    }
  }
  for (const auto& p : preds) {
    if (static_cast<int>(p.size()) != ds.config.joints) throw InputError("prediction joint count mismatch");
  }

  EvalOptions opts;
  opts.mean_precision = a.mp;
  opts.mp_threshold_mm = a.mp_threshold;
  opts.fingertips = ds.config.fingertips;
  opts.mean_ap = a.map;
  opts.map_threshold_mm = a.map_threshold;
  if (a.mp) {
    if (opts.fingertips.empty()) throw InputError("--mp needs fingertip indices in the manifest");
    resolved["mp_threshold"] = text::format_double(a.mp_threshold);
  }
  if (a.map) resolved["map_threshold"] = text::format_double(a.map_threshold);
  const EvalReport report = evaluate(preds, ds.poses, opts);

  const fs::path dir(a.out);
  text::write_file(dir / "per_joint.csv", per_joint_csv(report));
  text::write_file(dir / "success_curve.csv", success_curve_csv(report));
  text::write_file(dir / "summary.csv", summary_csv(report));
  std::string lines;
  for (const auto& p : preds) lines += format_pose_line(p) + "\n";
  text::write_file(dir / "predictions.txt", lines);
  write_resolved(dir, resolved);

  out << "frames " << preds.size() << ", mean error " << text::format_double(report.errors.overall) << " mm\n";
  if (report.mp) out << "mP@" << text::format_double(a.mp_threshold) << "mm " << text::format_double(*report.mp) << "\n";
  if (report.map) {
    out << "mAP@" << text::format_double(a.map_threshold) << "mm " << text::format_double(report.map->mean) << "\n";
  }
  return 0;
}

// predict --------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string depth;
  std::string intrinsics;
  std::string manifest;
  std::string center;
  std::string out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream&) {
  if (a.intrinsics.empty() == a.manifest.empty()) {
    throw InputError("predict needs exactly one of --intrinsics or --manifest for the camera");
  }
  const CameraIntrinsics k =
      a.intrinsics.empty() ? read_manifest(a.manifest).config.intrinsics : parse_intrinsics(a.intrinsics);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const DepthFrame frame = read_depth_file(a.depth, k);
  const Vec3 center =
      a.center.empty() ? segment_and_center(frame, ck.crop.near_mm, ck.crop.far_mm) : parse_vec3(a.center, "--center");
  const PatchSample patch = crop_patch(frame, center, ck.crop.extent, ck.model.config().input_size);
  const Pose pose = denormalize_labels(predict_patches(ck.model, {patch}, 1).front(), center, ck.crop.extent);
  const std::string line = format_pose_line(pose);
  out << line << "\n";
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    text::write_file(dir / "pose.txt", line + "\n");
    std::map<std::string, std::string> resolved{{"checkpoint", a.checkpoint}, {"depth", a.depth}};
    if (!a.manifest.empty()) resolved["manifest"] = a.manifest;
    if (!a.intrinsics.empty()) resolved["intrinsics"] = a.intrinsics;
    resolved["center"] = text::format_double(center.x) + "," + text::format_double(center.y) + "," +
                         text::format_double(center.z);
    resolved["center_source"] = a.center.empty() ? "segmentation" : "override";
    write_resolved(dir, resolved);
  }
  return 0;
}

// gen-data -------------------------------------------------------------------

struct GenArgs {
  std::string spec;
  int n = 0;
  long long seed = 0;
  std::string out;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out, std::ostream&) {
  if (a.n < 1) throw InputError("--n must be >= 1");
  if (a.seed < 0) throw InputError("--seed must be >= 0");
  const SyntheticHandSpec spec =
      a.spec.empty() ? SyntheticHandSpec::default_hand() : SyntheticHandSpec::from_map(text::read_key_value_file(a.spec));
  const Dataset ds = generate_synthetic(spec, a.n, RngStream(static_cast<std::uint64_t>(a.seed)));
  const fs::path manifest = write_dataset(a.out, ds);
  auto resolved = spec.to_map();
  resolved["n"] = std::to_string(a.n);
  resolved["seed"] = std::to_string(a.seed);
  write_resolved(a.out, resolved);
  const DatasetStats s = dataset_stats(ds);
  out << "wrote " << s.frames << " frames to " << manifest.string() << "\n";
  out << "joints " << s.joints << ", depth " << s.depth_min << ".." << s.depth_max << " mm, labels x "
      << text::format_double(s.label_min.x) << ".." << text::format_double(s.label_max.x) << " y "
      << text::format_double(s.label_min.y) << ".." << text::format_double(s.label_max.y) << " z "
      << text::format_double(s.label_min.z) << ".." << text::format_double(s.label_max.z) << "\n";
  return 0;
}

// rf -------------------------------------------------------------------------

struct RfArgs {
  std::string config;
  std::string stack;
  std::string out;
  std::map<std::string, std::string> slots;
  std::map<std::string, CLI::Option*> options;
};

int cmd_rf(const RfArgs& a, std::ostream& out, std::ostream&) {
  const RunConfig rc = resolve_run_config(a.config, given(a.slots, a.options));
  const std::vector<LayerDesc> stack = a.stack.empty() ? feature_stack(rc.model.architecture) : parse_layer_stack(a.stack);
  int feature = rc.model.input_size;
  for (const auto& layer : stack) feature = conv_output_size(feature, layer.kernel, layer.stride, layer.pad);
  if (feature < 1) throw InputError("layer stack reduces the input to nothing");
  ModelConfig mc = rc.model;
  const RegionSpec regions = mc.head == HeadKind::Single ? RegionSpec::parse("full", feature)
                                                         : RegionSpec::parse(mc.regions, feature);
  std::string csv = "region,row,col,height,width,rows_lo,rows_hi,cols_lo,cols_hi,rf_height,rf_width\n";
  for (std::size_t i = 0; i < regions.regions.size(); ++i) {
    const Region& r = regions.regions[i];
    const ReceptiveField rf = receptive_field(stack, r, rc.model.input_size);
    csv += std::to_string(i) + "," + std::to_string(r.row) + "," + std::to_string(r.col) + "," +
           std::to_string(r.height) + "," + std::to_string(r.width) + "," + std::to_string(rf.rows.lo) + "," +
           std::to_string(rf.rows.hi) + "," + std::to_string(rf.cols.lo) + "," + std::to_string(rf.cols.hi) + "," +
           std::to_string(rf.rows.length()) + "," + std::to_string(rf.cols.length()) + "\n";
  }
  out << csv;
  if (!a.out.empty()) {
    text::write_file(fs::path(a.out) / "rf.csv", csv);
    auto resolved = rc.to_map();
    if (!a.stack.empty()) resolved["stack"] = a.stack;
    write_resolved(a.out, resolved);
  }
  return 0;
}

// ablate ---------------------------------------------------------------------

struct AblateArgs {
  std::string config;
  std::string ladder = "table1";
  std::map<std::string, std::string> slots;
  std::map<std::string, CLI::Option*> options;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig base = resolve_run_config(a.config, given(a.slots, a.options));
  if (base.out.empty()) throw InputError("ablate needs an output directory (out)");
  const auto rungs = ablation_ladder(base, a.ladder);
  const std::string eval_path = base.eval_manifest.empty() ? base.manifest : base.eval_manifest;
  auto resolved = base.to_map();
  resolved["ladder"] = a.ladder;
  write_resolved(base.out, resolved);

  std::string csv = "rung,name,changed,architecture,head,loss,augment,mean_error_mm\n";
  std::optional<Dataset> eval_set;
  for (std::size_t i = 0; i < rungs.size(); ++i) {
    const auto& rung = rungs[i];
    err << "rung " << i + 1 << "/" << rungs.size() << ": " << rung.name << "\n";
    const TrainOutcome t = run_training(rung.config, err);
    if (!eval_set) eval_set = load_dataset(eval_path);
    const auto preds = predict_frames(t.model, eval_set->frames, crop_of(eval_set->config));
    const double error = mean_3d_error(preds, eval_set->poses).overall;
    const auto m = rung.config.to_map();
    csv += std::to_string(i + 1) + "," + rung.name + "," + (rung.changed_key.empty() ? "-" : rung.changed_key) + "," +
           m.at("architecture") + "," + m.at("head") + "," + m.at("loss") + "," + m.at("augment") + "," +
           text::format_double(error) + "\n";
  }
  text::write_file(fs::path(base.out) / "ablation.csv", csv);
  out << csv;
  return 0;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> k = kModelKeys;
    for (const auto& [key, value] : TrainConfig{}.to_map()) k.push_back(key);
    k.insert(k.end(), kRunKeys.begin(), kRunKeys.end());
    return k;
  }();
  return all;
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv = train.to_map();
  for (const auto& [k, v] : model.to_map()) {
    if (contains(kModelKeys, k)) kv[k] = v;
  }
  kv["manifest"] = manifest;
  kv["eval_manifest"] = eval_manifest;
  kv["out"] = out;
  kv["checkpoint_every"] = std::to_string(checkpoint_every);
  return kv;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  std::map<std::string, std::string> model_kv, train_kv;
  RunConfig rc;
  for (const auto& [k, v] : kv) {
    if (contains(kModelKeys, k)) {
      model_kv[k] = v;
    } else if (TrainConfig::is_key(k)) {
      train_kv[k] = v;
    } else if (k == "manifest") {
      rc.manifest = v;
    } else if (k == "eval_manifest") {
      rc.eval_manifest = v;
    } else if (k == "out") {
      rc.out = v;
    } else if (k == "checkpoint_every") {
      rc.checkpoint_every = static_cast<int>(text::parse_int(v, k));
      if (rc.checkpoint_every < 0) throw InputError("checkpoint_every must be >= 0");
    } else {
      throw InputError("unknown config key '" + k + "'");
    }
  }
  rc.model = ModelConfig::from_map(model_kv);
  rc.model.validate();
  rc.train = TrainConfig::from_map(train_kv);
  return rc;
}

RunConfig resolve_run_config(const fs::path& file, const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (!file.empty()) kv = text::read_key_value_file(file);
  for (const auto& [k, v] : overrides) kv[k] = v;
  return RunConfig::from_map(kv);
}

TrainOutcome run_training(const RunConfig& rc, std::ostream& log) {
  if (rc.manifest.empty()) throw InputError("no manifest given (manifest = ... or --manifest)");
  if (rc.out.empty()) throw InputError("no output directory given (out = ... or --out)");
  const Dataset ds = load_dataset(rc.manifest);
  ModelConfig mc = rc.model;
  mc.joints = ds.config.joints;
  RngStream init = RngStream(rc.train.seed).fork(kInitStream);
  TrainOutcome t{build_model<float>(mc, init), {}};
  const fs::path dir(rc.out);
  write_resolved(dir, rc.to_map());
  const CropSettings crop = crop_of(ds.config);

  double epoch_sum = 0;
  int epoch_batches = 0;
  TrainCallbacks cb;
  cb.on_batch = [&](const LossRecord& r) {
    epoch_sum += r.loss;
    ++epoch_batches;
  };
  cb.on_epoch_end = [&](int epoch) {
    log << "epoch " << epoch + 1 << "/" << rc.train.total_epochs << " lr " << text::format_double(lr_at(epoch, rc.train))
        << " mean loss " << text::format_double(epoch_sum / epoch_batches) << "\n";
    epoch_sum = 0;
    epoch_batches = 0;
    if (rc.checkpoint_every > 0 && (epoch + 1) % rc.checkpoint_every == 0) {
      save_checkpoint(dir / epoch_checkpoint_name(epoch + 1), t.model, crop);
    }
  };
  t.history = train(t.model, ds, rc.train, cb);
  text::write_file(dir / "loss.csv", format_loss_csv(t.history));
  save_checkpoint(dir / "model.renc", t.model, crop);
  return t;
}

std::vector<AblationRung> ablation_ladder(const RunConfig& base, const std::string& preset) {
  if (preset != "table1") throw InputError("unknown ablation ladder '" + preset + "' (available: table1)");
  const fs::path root(base.out);
  std::vector<AblationRung> rungs;
  RunConfig c = base;
  c.model.architecture = Architecture::Shallow;
  c.model.head = HeadKind::Single;
  c.train.loss = LossKind::L2;
  c.train.augment = false;
  const auto push = [&](const std::string& name, const std::string& key) {
    RunConfig rc = c;
    rc.out = (root / ("rung" + std::to_string(rungs.size() + 1) + "_" + name)).string();
    rungs.push_back({name, key, rc});
  };
  push("shallow", "");
  c.model.architecture = Architecture::Basic;
  push("deeper", "architecture");
  c.model.architecture = Architecture::BasicResidual;
  push("residual", "architecture");
  c.train.loss = LossKind::SmoothL1;
  push("smooth-l1", "loss");
  c.train.augment = true;
  push("augmentation", "augment");
  c.model.head = HeadKind::RegionEnsemble;
  push("region-ensemble", "head");
  return rungs;
}

std::vector<Pose> read_predictions(const fs::path& path) {
  const std::string content = text::read_file(path);
  std::vector<Pose> poses;
  std::istringstream lines(content);
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto fields = text::split_ws(t);
    if (fields.size() % 3 != 0 || fields.empty()) {
      throw InputError(path.string() + ":" + std::to_string(number) + ": expected 3J numbers, got " +
                       std::to_string(fields.size()));
    }
    Pose p;
    for (std::size_t i = 0; i < fields.size(); i += 3) {
      p.joints.push_back({text::parse_double(fields[i], "x"), text::parse_double(fields[i + 1], "y"),
                          text::parse_double(fields[i + 2], "z")});
    }
    poses.push_back(std::move(p));
  }
  return poses;
}

std::string format_pose_line(const Pose& pose) {
  std::string line;
  for (const auto& j : pose.joints) {
    for (double v : {j.x, j.y, j.z}) {
      if (!line.empty()) line += ' ';
      line += text::format_double(v);
    }
  }
  return line;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region ensemble network for 3D hand pose regression from depth images", "ren"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, loss CSV and config");
  train_cmd->add_option("--config", train_args.config, "Run config file (key = value)")->check(CLI::ExistingFile);
  add_config_overrides(train_cmd, train_args.slots, train_args.options, RunConfig::keys());

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate predictions against a manifest");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint");
  eval_cmd->add_option("--bag", eval_args.bag, "Checkpoints whose predictions are averaged");
  eval_cmd->add_option("--predictions", eval_args.predictions, "Text file of predicted poses, one line per frame");
  eval_cmd->add_option("--manifest", eval_args.manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output directory")->required();
  eval_cmd->add_flag("--mp", eval_args.mp, "Report fingertip mean precision");
  eval_cmd->add_option("--mp-threshold", eval_args.mp_threshold, "mP threshold in mm");
  eval_cmd->add_flag("--map", eval_args.map, "Report per-joint detection rates and their mean");
  eval_cmd->add_option("--map-threshold", eval_args.map_threshold, "mAP threshold in mm");
  eval_args.multiview_opt =
      eval_cmd->add_option("--multiview", eval_args.multiview, "Average nine crops offset by d mm in x and y");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Predict the pose in one depth file");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "Model checkpoint")->required();
  predict_cmd->add_option("--depth", predict_args.depth, "Depth file (RDEP)")->required();
  predict_cmd->add_option("--intrinsics", predict_args.intrinsics, "Camera as fx,fy,cx,cy");
  predict_cmd->add_option("--manifest", predict_args.manifest, "Take the camera from this manifest");
  predict_cmd->add_option("--center", predict_args.center, "Crop center x,y,z in mm; skips segmentation");
  predict_cmd->add_option("--out", predict_args.out, "Also write pose.txt and config.txt here");

  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic hand dataset");
  gen_cmd->add_option("--spec", gen_args.spec, "Hand spec overrides (key = value)");
  gen_cmd->add_option("--n", gen_args.n, "Number of frames")->required();
  gen_cmd->add_option("--seed", gen_args.seed, "Random seed");
  gen_cmd->add_option("--out", gen_args.out, "Output directory")->required();

  RfArgs rf_args;
  auto* rf_cmd = app.add_subcommand("rf", "Receptive field of every region in the input image");
  rf_cmd->add_option("--config", rf_args.config, "Run config file (key = value)")->check(CLI::ExistingFile);
  rf_cmd->add_option("--stack", rf_args.stack, "Custom layer stack, e.g. conv3,conv3,pool2");
  rf_cmd->add_option("--out", rf_args.out, "Also write rf.csv and config.txt here");
  add_config_overrides(rf_cmd, rf_args.slots, rf_args.options, kModelKeys);

  AblateArgs ablate_args;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate the incremental configuration ladder");
  ablate_cmd->add_option("--config", ablate_args.config, "Run config file (key = value)")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--ladder", ablate_args.ladder, "Ladder preset");
  add_config_overrides(ablate_cmd, ablate_args.slots, ablate_args.options, RunConfig::keys());

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out, err);
    if (*eval_cmd) return cmd_eval(eval_args, out, err);
    if (*predict_cmd) return cmd_predict(predict_args, out, err);
    if (*gen_cmd) return cmd_gen_data(gen_args, out, err);
    if (*rf_cmd) return cmd_rf(rf_args, out, err);
    if (*ablate_cmd) return cmd_ablate(ablate_args, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace ren::cli
