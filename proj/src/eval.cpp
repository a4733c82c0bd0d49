#include "ren/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "ren/error.hpp"
#include "ren/text.hpp"

namespace ren {
namespace {

void check_pairs(const std::vector<Pose>& preds, const std::vector<Pose>& gts, const char* op) {
  if (preds.size() != gts.size()) {
    throw InputError(std::string(op) + ": " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(gts.size()) + " ground-truth poses");
  }
  if (preds.empty()) throw InputError(std::string(op) + ": no frames");
  const std::size_t joints = gts.front().size();
  if (joints == 0) throw InputError(std::string(op) + ": poses have no joints");
  for (std::size_t f = 0; f < preds.size(); ++f) {
    if (preds[f].size() != joints || gts[f].size() != joints) {
      throw InputError(std::string(op) + ": frame " + std::to_string(f) + " joint count mismatch");
    }
  }
}

// Incremental mean; exact when every pose is identical.
Pose running_mean(const std::vector<Pose>& poses) {
  Pose mean = poses.front();
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const double w = 1.0 / static_cast<double>(k + 1);
    for (std::size_t j = 0; j < mean.joints.size(); ++j) {
      mean.joints[j] = mean.joints[j] + w * (poses[k].joints[j] - mean.joints[j]);
    }
  }
  return mean;
}

double joint_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts, std::size_t f, std::size_t j) {
  return norm(preds[f].joints[j] - gts[f].joints[j]);
}

}  // namespace

JointErrors mean_3d_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts) {
  check_pairs(preds, gts, "mean_3d_error");
  const std::size_t joints = gts.front().size();
  JointErrors out;
  out.per_joint.assign(joints, 0.0);
  for (std::size_t j = 0; j < joints; ++j) {
    double total = 0;
    for (std::size_t f = 0; f < preds.size(); ++f) total += joint_error(preds, gts, f, j);
    out.per_joint[j] = total / static_cast<double>(preds.size());
  }
  double total = 0;
  for (double e : out.per_joint) total += e;
  out.overall = total / static_cast<double>(joints);
  return out;
}

std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int mm = 0; mm <= 80; ++mm) t.push_back(mm);
  return t;
}

std::vector<CurvePoint> success_frame_curve(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                            const std::vector<double>& thresholds) {
  check_pairs(preds, gts, "success_frame_curve");
  if (thresholds.empty()) throw InputError("success_frame_curve: no thresholds");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InputError("success_frame_curve: thresholds must be sorted ascending");
  }
  std::vector<double> worst(preds.size(), 0.0);
  for (std::size_t f = 0; f < preds.size(); ++f) {
    for (std::size_t j = 0; j < gts[f].size(); ++j) worst[f] = std::max(worst[f], joint_error(preds, gts, f, j));
  }
  std::vector<CurvePoint> curve;
  for (double t : thresholds) {
    const auto hits = std::count_if(worst.begin(), worst.end(), [t](double w) { return w < t; });
    curve.push_back({t, static_cast<double>(hits) / static_cast<double>(worst.size())});
  }
  return curve;
}

double mean_precision_fingertips(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                 const std::vector<int>& fingertips, double threshold_mm) {
  check_pairs(preds, gts, "mean_precision_fingertips");
  if (fingertips.empty()) throw InputError("mean_precision_fingertips: no fingertip indices");
  const int joints = static_cast<int>(gts.front().size());
  double total = 0;
  for (int tip : fingertips) {
    if (tip < 0 || tip >= joints) throw InputError("fingertip index " + std::to_string(tip) + " out of range");
    std::size_t hits = 0;
    for (std::size_t f = 0; f < preds.size(); ++f) {
      if (joint_error(preds, gts, f, static_cast<std::size_t>(tip)) < threshold_mm) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(preds.size());
  }
  return total / static_cast<double>(fingertips.size());
}

DetectionRates mean_average_precision(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                      double threshold_mm) {
  check_pairs(preds, gts, "mean_average_precision");
  const std::size_t joints = gts.front().size();
  DetectionRates out;
  double total = 0;
  for (std::size_t j = 0; j < joints; ++j) {
    std::size_t hits = 0;
    for (std::size_t f = 0; f < preds.size(); ++f) {
      if (joint_error(preds, gts, f, j) < threshold_mm) ++hits;
    }
    out.per_joint.push_back(static_cast<double>(hits) / static_cast<double>(preds.size()));
    total += out.per_joint.back();
  }
  out.mean = total / static_cast<double>(joints);
  return out;
}

EvalReport evaluate(const std::vector<Pose>& preds, const std::vector<Pose>& gts, const EvalOptions& options) {
  EvalReport r;
  r.errors = mean_3d_error(preds, gts);
  r.curve = success_frame_curve(preds, gts, options.thresholds);
  if (options.mean_precision) {
    r.mp = mean_precision_fingertips(preds, gts, options.fingertips, options.mp_threshold_mm);
  }
  if (options.mean_ap) r.map = mean_average_precision(preds, gts, options.map_threshold_mm);
  return r;
}

std::string per_joint_csv(const EvalReport& report) {
  const bool rates = report.map.has_value();
  std::string out = rates ? "joint,mean_error_mm,detection_rate\n" : "joint,mean_error_mm\n";
  for (std::size_t j = 0; j < report.errors.per_joint.size(); ++j) {
    out += std::to_string(j) + "," + text::format_double(report.errors.per_joint[j]);
    if (rates) out += "," + text::format_double(report.map->per_joint[j]);
    out += "\n";
  }
  out += "overall," + text::format_double(report.errors.overall);
  if (rates) out += "," + text::format_double(report.map->mean);
  out += "\n";
  return out;
}

std::string success_curve_csv(const EvalReport& report) {
  std::string out = "threshold_mm,fraction\n";
  for (const auto& p : report.curve) {
    out += text::format_double(p.threshold_mm) + "," + text::format_double(p.fraction) + "\n";
  }
  return out;
}

std::string summary_csv(const EvalReport& report) {
  std::string out = "metric,value\n";
  out += "mean_error_mm," + text::format_double(report.errors.overall) + "\n";
  if (report.mp) out += "mp," + text::format_double(*report.mp) + "\n";
  if (report.map) out += "map," + text::format_double(report.map->mean) + "\n";
  return out;
}

StackGeometry stack_geometry(const std::vector<LayerDesc>& stack) {
  StackGeometry g;
  for (const auto& layer : stack) {
    if (layer.kernel < 1 || layer.stride < 1 || layer.pad < 0) throw InputError("invalid layer parameters");
    g.pad_total += layer.pad * g.jump;
    g.span += (layer.kernel - 1) * g.jump;
    g.jump *= layer.stride;
  }
  return g;
}

ReceptiveField receptive_field(const std::vector<LayerDesc>& stack, const Region& region, int input_size) {
  if (input_size < 1) throw InputError("input size must be >= 1");
  if (region.row < 0 || region.col < 0 || region.height < 1 || region.width < 1) {
    throw InputError("receptive_field: invalid region");
  }
  const StackGeometry g = stack_geometry(stack);
  const auto raw = [&g](int first, int count) {
    return Interval{first * g.jump - g.pad_total, (first + count - 1) * g.jump - g.pad_total + g.span - 1};
  };
  const auto clip = [input_size](Interval iv) {
    iv.lo = std::max(iv.lo, 0);
    iv.hi = std::min(iv.hi, input_size - 1);
    if (iv.hi < iv.lo) throw InputError("receptive field lies outside the input");
    return iv;
  };
  ReceptiveField rf;
  rf.raw_rows = raw(region.row, region.height);
  rf.raw_cols = raw(region.col, region.width);
  rf.rows = clip(rf.raw_rows);
  rf.cols = clip(rf.raw_cols);
  return rf;
}

std::vector<LayerDesc> parse_layer_stack(std::string_view spec) {
  std::vector<LayerDesc> out;
  for (const auto& raw : text::split(spec, ',')) {
    const std::string token(text::trim(raw));
    if (token.empty()) continue;
    const auto parts = text::split(token, '/');
    const std::string head(text::trim(parts[0]));
    LayerDesc layer;
    std::string digits;
    if (head.starts_with("conv")) {
      layer.kind = LayerDesc::Kind::Conv;
      digits = head.substr(4);
    } else if (head.starts_with("pool")) {
      layer.kind = LayerDesc::Kind::Pool;
      digits = head.substr(4);
    } else {
      throw InputError("unknown layer '" + token + "' (expected convK or poolK)");
    }
    if (digits.empty()) throw InputError("layer '" + token + "' is missing its kernel size");
    layer.kernel = static_cast<int>(text::parse_int(digits, "kernel size"));
    if (layer.kernel < 1) throw InputError("layer '" + token + "' has kernel < 1");
    layer.stride = layer.kind == LayerDesc::Kind::Conv ? 1 : layer.kernel;
    layer.pad = layer.kind == LayerDesc::Kind::Conv ? layer.kernel / 2 : 0;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const std::string opt(text::trim(parts[i]));
      if (opt.size() < 2 || (opt[0] != 's' && opt[0] != 'p')) {
        throw InputError("unknown layer option '" + opt + "' in '" + token + "'");
      }
      const int value = static_cast<int>(text::parse_int(opt.substr(1), "layer option"));
      if (opt[0] == 's') layer.stride = value;
      else layer.pad = value;
    }
    if (layer.stride < 1 || layer.pad < 0) throw InputError("layer '" + token + "' has invalid stride or pad");
    out.push_back(layer);
  }
  if (out.empty()) throw InputError("layer stack is empty");
  return out;
}

std::vector<std::vector<double>> predict_patches(const Model<float>& model, const std::vector<PatchSample>& patches,
                                                 std::size_t batch) {
  if (batch == 0) batch = 1;
  const int size = model.config().input_size;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;
  const std::size_t outputs = static_cast<std::size_t>(model.config().output_dim());
  Model<float> eval_model = model;
  eval_model.set_mode(Mode::Eval);
  NoGradGuard no_grad;
  RngStream unused(0);
  std::vector<std::vector<double>> out;
  out.reserve(patches.size());
  for (std::size_t start = 0; start < patches.size(); start += batch) {
    const std::size_t count = std::min(batch, patches.size() - start);
    std::vector<float> input(count * pixels);
    for (std::size_t b = 0; b < count; ++b) {
      const auto& p = patches[start + b];
      if (p.size != size || p.patch.size() != pixels) {
        throw ShapeError("patch of size " + std::to_string(p.size) + " for a model with input " +
                         std::to_string(size));
      }
      std::copy(p.patch.begin(), p.patch.end(), input.begin() + static_cast<std::ptrdiff_t>(b * pixels));
    }
    const auto x = Tensor<float>::from({count, 1, static_cast<std::size_t>(size), static_cast<std::size_t>(size)},
                                       std::move(input));
    const auto y = eval_model.forward(x, unused);
    for (std::size_t b = 0; b < count; ++b) {
      const auto row = y.values().subspan(b * outputs, outputs);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

PatchPredictor model_predictor(const Model<float>& model) {
  return [&model](const PatchSample& patch) { return predict_patches(model, {patch}, 1).front(); };
}

std::vector<Pose> predict_frames(const Model<float>& model, const std::vector<DepthFrame>& frames,
                                 const CropSettings& crop) {
  const int size = model.config().input_size;
  std::vector<PatchSample> patches(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Vec3 center = segment_and_center(frames[i], crop.near_mm, crop.far_mm);
    patches[i] = crop_patch(frames[i], center, crop.extent, size);
  }
  const auto outputs = predict_patches(model, patches);
  std::vector<Pose> poses;
  poses.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    poses.push_back(denormalize_labels(outputs[i], patches[i].center, patches[i].extent));
  }
  return poses;
}

MultiviewResult multiview_predict(const PatchPredictor& predictor, const DepthFrame& frame, const Vec3& center,
                                  const CropExtent& extent, int input_size, double d_mm) {
  if (!std::isfinite(d_mm) || d_mm < 0) throw InputError("multiview offset must be finite and >= 0");
  MultiviewResult result;
  if (d_mm == 0) {
    // All nine views coincide; their mean is the single view.
    const PatchSample patch = crop_patch(frame, center, extent, input_size);
    result.pose = denormalize_labels(predictor(patch), center, extent);
    result.views_used = 9;
    return result;
  }
  std::vector<Pose> views;
  for (int iy = -1; iy <= 1; ++iy) {
    for (int ix = -1; ix <= 1; ++ix) {
      const Vec3 shifted{center.x + ix * d_mm, center.y + iy * d_mm, center.z};
      try {
        const PatchSample patch = crop_patch(frame, shifted, extent, input_size);
        views.push_back(denormalize_labels(predictor(patch), shifted, extent));
      } catch (const Error&) {
        ++result.views_failed;
      }
    }
  }
  if (views.empty()) throw Error("multiview_predict: every view failed");
  if (result.views_failed > 0) {
    std::cerr << "warning: multiview skipped " << result.views_failed << " of 9 views\n";
  }
  result.views_used = static_cast<int>(views.size());
  result.pose = running_mean(views);
  return result;
}

Pose bagging_predict(const std::vector<const Model<float>*>& models, const PatchSample& patch) {
  if (models.empty()) throw InputError("bagging_predict: no models");
  const int joints = models.front()->config().joints;
  for (const auto* m : models) {
    if (m->config().joints != joints) throw InputError("bagging_predict: models disagree on joint count");
  }
  std::vector<Pose> poses;
  for (const auto* m : models) {
    poses.push_back(denormalize_labels(predict_patches(*m, {patch}, 1).front(), patch.center, patch.extent));
  }
  return running_mean(poses);
}

}  // namespace ren
