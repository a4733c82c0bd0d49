#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ren/data.hpp"
#include "ren/geometry.hpp"
#include "ren/nn.hpp"

namespace ren {

// Metrics --------------------------------------------------------------------
//
// Every detection-style metric counts an error as detected when it is strictly
// below the threshold.

struct JointErrors {
  std::vector<double> per_joint;
  double overall = 0;
};

JointErrors mean_3d_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts);

struct CurvePoint {
  double threshold_mm = 0;
  double fraction = 0;

  bool operator==(const CurvePoint&) const = default;
};

/// 0, 1, ..., 80 mm.
std::vector<double> default_thresholds();

/// Fraction of frames whose worst joint error is below each threshold.
std::vector<CurvePoint> success_frame_curve(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                            const std::vector<double>& thresholds = default_thresholds());

/// Mean over the listed joints of the fraction of frames where that joint is
/// within the threshold.
double mean_precision_fingertips(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                 const std::vector<int>& fingertips, double threshold_mm = 15);

struct DetectionRates {
  std::vector<double> per_joint;
  double mean = 0;
};

DetectionRates mean_average_precision(const std::vector<Pose>& preds, const std::vector<Pose>& gts,
                                      double threshold_mm = 100);

struct EvalOptions {
  std::vector<double> thresholds = default_thresholds();
  bool mean_precision = false;
  std::vector<int> fingertips;
  double mp_threshold_mm = 15;
  bool mean_ap = false;
  double map_threshold_mm = 100;
};

struct EvalReport {
  JointErrors errors;
  std::vector<CurvePoint> curve;
  std::optional<double> mp;
  std::optional<DetectionRates> map;
};

EvalReport evaluate(const std::vector<Pose>& preds, const std::vector<Pose>& gts, const EvalOptions& options = {});

/// "joint,mean_error_mm" (plus "detection_rate" with mAP), then an "overall" row.
std::string per_joint_csv(const EvalReport& report);
/// "threshold_mm,fraction".
std::string success_curve_csv(const EvalReport& report);
/// "metric,value" summary rows.
std::string summary_csv(const EvalReport& report);

// Receptive fields -----------------------------------------------------------

/// Closed pixel interval [lo, hi].
struct Interval {
  int lo = 0;
  int hi = 0;

  int length() const { return hi - lo + 1; }
  bool operator==(const Interval&) const = default;
};

/// One feature cell i covers input pixels [i*jump - pad_total, i*jump - pad_total + span - 1].
struct StackGeometry {
  int jump = 1;
  int span = 1;
  int pad_total = 0;
};

StackGeometry stack_geometry(const std::vector<LayerDesc>& stack);

struct ReceptiveField {
  Interval rows;
  Interval cols;
  /// Before clipping to the image.
  Interval raw_rows;
  Interval raw_cols;
};

ReceptiveField receptive_field(const std::vector<LayerDesc>& stack, const Region& region, int input_size);

/// Comma-separated layers: "convK" or "convK/sS/pP", "poolK" or "poolK/sS".
/// Defaults: conv stride 1 pad K/2, pool stride K pad 0.
std::vector<LayerDesc> parse_layer_stack(std::string_view text);

// Inference baselines --------------------------------------------------------

/// Normalized 3J output for one patch.
using PatchPredictor = std::function<std::vector<double>(const PatchSample&)>;

/// Eval-mode forward pass of `model` on a single patch.
PatchPredictor model_predictor(const Model<float>& model);

/// Batched eval-mode forward passes over many patches, normalized outputs.
std::vector<std::vector<double>> predict_patches(const Model<float>& model, const std::vector<PatchSample>& patches,
                                                 std::size_t batch = 32);

/// Segment, crop, predict and denormalize every frame.
std::vector<Pose> predict_frames(const Model<float>& model, const std::vector<DepthFrame>& frames,
                                 const CropSettings& crop);

struct MultiviewResult {
  Pose pose;
  int views_used = 0;
  int views_failed = 0;
};

/// Nine crops at center + (dx, dy, 0) for dx, dy in {-d, 0, d}; each view is
/// denormalized about its own center and the world-space poses are averaged.
/// Views whose crop fails are skipped.
MultiviewResult multiview_predict(const PatchPredictor& predictor, const DepthFrame& frame, const Vec3& center,
                                  const CropExtent& extent, int input_size, double d_mm = 26.5625);

/// Mean of the denormalized pose of each model on the same patch.
Pose bagging_predict(const std::vector<const Model<float>*>& models, const PatchSample& patch);

}  // namespace ren
