#include "ren/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ren/error.hpp"

namespace ren {

double norm(Vec3 v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

void CameraIntrinsics::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw InputError("camera focal lengths must be > 0");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw InputError("camera principal point must be finite");
}

PixelDepth project(const Vec3& world, const CameraIntrinsics& k) {
  if (!(world.z > 0)) throw InputError("project: point depth must be > 0, got " + std::to_string(world.z));
  return {k.fx * world.x / world.z + k.cx, k.fy * world.y / world.z + k.cy, world.z};
}

Vec3 backproject(double u, double v, double d, const CameraIntrinsics& k) {
  if (!(d > 0)) throw InputError("backproject: depth must be > 0, got " + std::to_string(d));
  return {(u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d};
}

DepthFrame::DepthFrame(int w, int h, CameraIntrinsics k)
    : width(w), height(h), depth(static_cast<std::size_t>(std::max(w, 0)) * std::max(h, 0), 0), intrinsics(k) {}

void DepthFrame::validate() const {
  if (width <= 0 || height <= 0) throw InputError("depth frame dimensions must be > 0");
  if (depth.size() != static_cast<std::size_t>(width) * height) throw InputError("depth frame payload size mismatch");
  intrinsics.validate();
}

void CropExtent::validate() const {
  if (!(x > 0) || !(y > 0) || !(z > 0)) throw InputError("crop extents must be > 0");
}

void AugmentRanges::validate() const {
  if (!(translate_px >= 0)) throw InputError("augmentation translation range must be >= 0");
  if (!(scale_min > 0) || !(scale_max >= scale_min)) throw InputError("augmentation scale range must satisfy 0 < min <= max");
  if (!(rotate_deg >= 0)) throw InputError("augmentation rotation range must be >= 0");
  if (!(flip_probability >= 0 && flip_probability <= 1)) throw InputError("flip probability must be in [0, 1]");
}

Vec3 segment_and_center(const DepthFrame& frame, double near_mm, double far_mm) {
  frame.validate();
  if (!(near_mm < far_mm)) throw InputError("segmentation needs near < far");
  double sx = 0, sy = 0, sz = 0;
  std::size_t count = 0;
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double d = frame.at(x, y);
      if (d > near_mm && d < far_mm) {
        const Vec3 p = backproject(x, y, d, frame.intrinsics);
        sx += p.x;
        sy += p.y;
        sz += p.z;
        ++count;
      }
    }
  }
  if (count == 0) throw NoForegroundError("no foreground pixels between " + std::to_string(near_mm) + " and " +
                                          std::to_string(far_mm) + " mm");
  const double n = static_cast<double>(count);
  return {sx / n, sy / n, sz / n};
}

double crop_half_window_px(double extent_mm, double focal_px, double depth_mm) { return extent_mm * focal_px / depth_mm; }

namespace {

struct InverseMap {
  double cos_t, sin_t, scale, tnx, tny;
  bool flip;

  InverseMap(const AugmentParams& aug, int size) {
    const double theta = aug.rotation_deg * std::numbers::pi / 180.0;
    cos_t = std::cos(theta);
    sin_t = std::sin(theta);
    scale = aug.scale;
    tnx = aug.tx / (size / 2.0);
    tny = aug.ty / (size / 2.0);
    flip = aug.flip;
  }

  // Output normalized coordinate -> source normalized coordinate.
  void operator()(double qx, double qy, double& px, double& py) const {
    const double dx = qx - tnx;
    const double dy = qy - tny;
    px = scale * (cos_t * dx + sin_t * dy);
    py = scale * (-sin_t * dx + cos_t * dy);
    if (flip) px = -px;
  }
};

template <class Fetch>
double interpolate(double x, double y, Interpolation interp, const Fetch& fetch) {
  if (interp == Interpolation::Nearest) {
    return fetch(static_cast<int>(std::floor(x + 0.5)), static_cast<int>(std::floor(y + 0.5)));
  }
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const double ax = x - fx0;
  const double ay = y - fy0;
  const double top = fetch(x0, y0) * (1 - ax) + fetch(x0 + 1, y0) * ax;
  const double bottom = fetch(x0, y0 + 1) * (1 - ax) + fetch(x0 + 1, y0 + 1) * ax;
  return top * (1 - ay) + bottom * ay;
}

}  // namespace

PatchSample crop_patch(const DepthFrame& frame, const Vec3& center, const CropExtent& extent, int out_size,
                       const AugmentParams& aug, Interpolation interp) {
  frame.validate();
  extent.validate();
  if (out_size < 1) throw InputError("patch size must be >= 1");
  if (!(center.z > 0)) throw InputError("crop center depth must be > 0");
  if (!(aug.scale > 0)) throw InputError("augmentation scale must be > 0");
  const auto& k = frame.intrinsics;
  const double hwx = crop_half_window_px(extent.x, k.fx, center.z);
  const double hwy = crop_half_window_px(extent.y, k.fy, center.z);
  if (2 * hwx < 2 || 2 * hwy < 2) {
    throw InputError("crop window of " + std::to_string(2 * hwx) + "x" + std::to_string(2 * hwy) +
                     " px is degenerate (< 2 px)");
  }
  const PixelDepth c = project(center, k);
  const double depth_extent = extent.z * aug.scale;
  const double far_depth = center.z + depth_extent;
  const auto fetch = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= frame.width || y >= frame.height) return far_depth;
    const double d = frame.at(x, y);
    if (d == 0 || std::abs(d - center.z) > depth_extent) return far_depth;
    return d;
  };

  PatchSample out;
  out.size = out_size;
  out.center = center;
  out.extent = {extent.x * aug.scale, extent.y * aug.scale, extent.z * aug.scale};
  out.augmentation = aug;
  out.patch.resize(static_cast<std::size_t>(out_size) * out_size);
  const InverseMap inverse(aug, out_size);
  for (int i = 0; i < out_size; ++i) {
    const double qy = pixel_to_normalized(i, out_size);
    for (int j = 0; j < out_size; ++j) {
      const double qx = pixel_to_normalized(j, out_size);
      double px = qx, py = qy;
      if (!aug.is_identity()) inverse(qx, qy, px, py);
      const double d = interpolate(c.u + px * hwx, c.v + py * hwy, interp, fetch);
      const double value = std::clamp((d - center.z) / depth_extent, -1.0, 1.0);
      out.patch[static_cast<std::size_t>(i) * out_size + j] = static_cast<float>(value);
    }
  }
  return out;
}

std::vector<double> normalize_labels(const Pose& pose, const Vec3& center, const CropExtent& extent) {
  std::vector<double> out;
  out.reserve(pose.size() * 3);
  for (const auto& j : pose.joints) {
    out.push_back((j.x - center.x) / extent.x);
    out.push_back((j.y - center.y) / extent.y);
    out.push_back((j.z - center.z) / extent.z);
  }
  return out;
}

Pose denormalize_labels(std::span<const double> labels, const Vec3& center, const CropExtent& extent) {
  if (labels.size() % 3 != 0) throw InputError("label vector length must be a multiple of 3");
  Pose pose;
  pose.joints.reserve(labels.size() / 3);
  for (std::size_t i = 0; i < labels.size(); i += 3) {
    if (!std::isfinite(labels[i]) || !std::isfinite(labels[i + 1]) || !std::isfinite(labels[i + 2])) {
      throw NumericError("non-finite label value");
    }
    pose.joints.push_back({labels[i] * extent.x + center.x, labels[i + 1] * extent.y + center.y,
                           labels[i + 2] * extent.z + center.z});
  }
  return pose;
}

AugmentParams draw_augmentation(RngStream& rng, const AugmentRanges& ranges) {
  ranges.validate();
  AugmentParams p;
  p.tx = rng.uniform(-ranges.translate_px, ranges.translate_px);
  p.ty = rng.uniform(-ranges.translate_px, ranges.translate_px);
  p.scale = rng.uniform(ranges.scale_min, ranges.scale_max);
  p.rotation_deg = rng.uniform(-ranges.rotate_deg, ranges.rotate_deg);
  p.flip = rng.bernoulli(ranges.flip_probability);
  return p;
}

std::vector<double> transform_labels(std::span<const double> labels, const AugmentParams& aug, int patch_size,
                                     std::span<const int> mirror) {
  if (labels.size() % 3 != 0) throw InputError("label vector length must be a multiple of 3");
  std::vector<double> out(labels.begin(), labels.end());
  if (aug.is_identity()) return out;
  const std::size_t joints = labels.size() / 3;
  if (aug.flip) {
    if (!mirror.empty() && mirror.size() != joints) {
      throw InputError("mirror map has " + std::to_string(mirror.size()) + " entries for " + std::to_string(joints) +
                       " joints");
    }
    for (std::size_t j = 0; j < joints; ++j) {
      const std::size_t src = mirror.empty() ? j : static_cast<std::size_t>(mirror[j]);
      if (src >= joints) throw InputError("mirror map index out of range");
      out[3 * j] = -labels[3 * src];
      out[3 * j + 1] = labels[3 * src + 1];
      out[3 * j + 2] = labels[3 * src + 2];
    }
  }
  const double theta = aug.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double tnx = aug.tx / (patch_size / 2.0);
  const double tny = aug.ty / (patch_size / 2.0);
  for (std::size_t j = 0; j < joints; ++j) {
    const double x = out[3 * j];
    const double y = out[3 * j + 1];
    out[3 * j] = (c * x - s * y) / aug.scale + tnx;
    out[3 * j + 1] = (s * x + c * y) / aug.scale + tny;
    out[3 * j + 2] = out[3 * j + 2] / aug.scale;
  }
  return out;
}

PatchSample apply_augmentation(const PatchSample& sample, const AugmentParams& aug, std::span<const int> mirror) {
  if (!(aug.scale > 0)) throw InputError("augmentation scale must be > 0");
  PatchSample out = sample;
  if (aug.is_identity()) return out;
  const int n = sample.size;
  const InverseMap inverse(aug, n);
  const auto fetch = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= n || y >= n) return 1.0;
    const double v = sample.patch[static_cast<std::size_t>(y) * n + x];
    return v >= 1.0 ? 1.0 : v / aug.scale;
  };
  for (int i = 0; i < n; ++i) {
    const double qy = pixel_to_normalized(i, n);
    for (int j = 0; j < n; ++j) {
      double px, py;
      inverse(pixel_to_normalized(j, n), qy, px, py);
      const double v = interpolate(normalized_to_pixel(px, n), normalized_to_pixel(py, n), Interpolation::Bilinear, fetch);
      out.patch[static_cast<std::size_t>(i) * n + j] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  if (!sample.labels.empty()) out.labels = transform_labels(sample.labels, aug, n, mirror);
  out.extent = {sample.extent.x * aug.scale, sample.extent.y * aug.scale, sample.extent.z * aug.scale};
  out.augmentation = aug;
  return out;
}

PatchSample augment(const PatchSample& sample, RngStream& rng, const AugmentRanges& ranges, std::span<const int> mirror) {
  if (sample.labels.empty()) throw InputError("augment: sample has no labels");
  return apply_augmentation(sample, draw_augmentation(rng, ranges), mirror);
}

}  // namespace ren
