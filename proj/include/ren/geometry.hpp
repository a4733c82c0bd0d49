#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ren/rng.hpp"

namespace ren {

struct Vec3 {
  double x = 0;
  double y = 0;
  double z = 0;

  bool operator==(const Vec3&) const = default;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
double norm(Vec3 v);

struct CameraIntrinsics {
  double fx = 0;
  double fy = 0;
  double cx = 0;
  double cy = 0;

  void validate() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Image position (u, v) in pixels, pixel centers at integers, plus depth in mm.
struct PixelDepth {
  double u = 0;
  double v = 0;
  double d = 0;
};

PixelDepth project(const Vec3& world, const CameraIntrinsics& k);
Vec3 backproject(double u, double v, double d, const CameraIntrinsics& k);

/// Depth image in millimeters, row-major, 0 = missing.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> depth;
  CameraIntrinsics intrinsics;

  DepthFrame() = default;
  DepthFrame(int w, int h, CameraIntrinsics k);

  std::uint16_t at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  void validate() const;
};

struct Pose {
  std::vector<Vec3> joints;

  std::size_t size() const noexcept { return joints.size(); }
  bool operator==(const Pose&) const = default;
};

/// Half-extents of the metric crop box in mm.
struct CropExtent {
  double x = 75;
  double y = 75;
  double z = 75;

  static CropExtent hand() { return {75, 75, 75}; }
  static CropExtent human_front() { return {400, 600, 400}; }
  static CropExtent human_top() { return {300, 300, 500}; }
  void validate() const;
  bool operator==(const CropExtent&) const = default;
};

/// One concrete augmentation draw. Translation is in output-patch pixels;
/// `scale` multiplies the crop box, so content shrinks by 1/scale.
struct AugmentParams {
  double tx = 0;
  double ty = 0;
  double scale = 1;
  double rotation_deg = 0;
  bool flip = false;

  bool is_identity() const { return tx == 0 && ty == 0 && scale == 1 && rotation_deg == 0 && !flip; }
};

/// Uniform sampling ranges for augmentation draws.
struct AugmentRanges {
  double translate_px = 10;
  double scale_min = 0.9;
  double scale_max = 1.1;
  double rotate_deg = 180;
  /// 0 for hands; 0.5 for human pose.
  double flip_probability = 0;

  static AugmentRanges none() { return {0, 1, 1, 0, 0}; }
  bool operator==(const AugmentRanges&) const = default;
  void validate() const;
};

/// Network input around a crop center, plus what is needed to map network
/// outputs back to world millimeters.
struct PatchSample {
  int size = 0;
  std::vector<float> patch;
  /// 3J normalized coordinates; empty at inference.
  std::vector<double> labels;
  Vec3 center;
  /// Effective box, already multiplied by augmentation.scale.
  CropExtent extent;
  AugmentParams augmentation;
};

enum class Interpolation { Bilinear, Nearest };

/// Centroid of the backprojected pixels with near < depth < far.
/// Throws NoForegroundError when no pixel qualifies.
Vec3 segment_and_center(const DepthFrame& frame, double near_mm = 100, double far_mm = 1500);

/// Half window in pixels covered by the crop box at the center's depth.
double crop_half_window_px(double extent_mm, double focal_px, double depth_mm);

/// Cuts the metric box center +- extent out of `frame` and resamples it to
/// out_size x out_size values in [-1, 1]. Missing and out-of-box depths read as
/// the far plane (+1). A non-identity `aug` is composed into the same
/// resampling pass, so the frame is interpolated once.
PatchSample crop_patch(const DepthFrame& frame, const Vec3& center, const CropExtent& extent, int out_size,
                       const AugmentParams& aug = {}, Interpolation interp = Interpolation::Bilinear);

std::vector<double> normalize_labels(const Pose& pose, const Vec3& center, const CropExtent& extent);
Pose denormalize_labels(std::span<const double> labels, const Vec3& center, const CropExtent& extent);

AugmentParams draw_augmentation(RngStream& rng, const AugmentRanges& ranges);

/// Label side of an augmentation: optional flip with joint mirroring, then
/// rotation, 1/scale and translation in normalized patch coordinates.
/// `mirror[j]` names the joint that becomes joint j after a flip.
std::vector<double> transform_labels(std::span<const double> labels, const AugmentParams& aug, int patch_size,
                                     std::span<const int> mirror = {});

/// Warps an existing patch and its labels by `aug`.
PatchSample apply_augmentation(const PatchSample& sample, const AugmentParams& aug, std::span<const int> mirror = {});

/// Draws from `ranges` and applies the draw to the sample.
PatchSample augment(const PatchSample& sample, RngStream& rng, const AugmentRanges& ranges,
                    std::span<const int> mirror = {});

/// Normalized patch coordinate in [-1, 1] of the center of pixel i.
inline double pixel_to_normalized(double i, int size) { return (i + 0.5 - size / 2.0) / (size / 2.0); }
inline double normalized_to_pixel(double q, int size) { return q * (size / 2.0) + size / 2.0 - 0.5; }

}  // namespace ren
