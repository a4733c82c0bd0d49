#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ren/data.hpp"
#include "ren/geometry.hpp"
#include "ren/rng.hpp"

namespace ren {

struct Sphere {
  Vec3 center;
  double radius = 0;
};

/// Segment a-b swept by a ball of `radius`.
struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0;
};

struct Scene {
  std::vector<Sphere> spheres;
  std::vector<Capsule> capsules;

  bool empty() const { return spheres.empty() && capsules.empty(); }
};

/// Nearest positive ray parameter for a ray from the camera origin along
/// `dir` (any length; returned t is in units of |dir|).
std::optional<double> intersect(const Vec3& dir, const Sphere& s);
std::optional<double> intersect(const Vec3& dir, const Capsule& c);

/// Exact z of the first surface hit through each pixel center, 0 where the
/// ray misses everything.
std::vector<double> render_depth(const Scene& scene, const CameraIntrinsics& k, int width, int height);

struct FingerSpec {
  /// Angle of the finger root around the palm rim, degrees (0 = straight up).
  double root_angle_deg = 0;
  std::array<double, 3> lengths{40, 25, 20};
  std::array<double, 3> radii{9, 8, 7};
};

/// Articulated capsule hand. Emitted joints: palm center, then for each finger
/// the far end of each of its three segments (root to tip). With five fingers
/// that is 16 joints and fingertips at 3, 6, 9, 12, 15.
struct SyntheticHandSpec {
  double palm_radius = 38;
  std::vector<FingerSpec> fingers;

  double mcp_flex_max_deg = 70;
  double pip_flex_max_deg = 90;
  double dip_flex_max_deg = 60;
  double abduction_max_deg = 12;

  double roll_range_deg = 60;
  double yaw_range_deg = 30;
  double pitch_range_deg = 30;
  double depth_min_mm = 380;
  double depth_max_mm = 520;
  double lateral_range_mm = 40;

  int width = 128;
  int height = 128;
  CameraIntrinsics intrinsics{220, 220, 63.5, 63.5};
  int max_retries = 100;

  static SyntheticHandSpec default_hand();
  /// Default hand with the given keys overridden; unknown keys are rejected.
  static SyntheticHandSpec from_map(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_map() const;

  int joint_count() const { return 1 + 3 * static_cast<int>(fingers.size()); }
  std::vector<int> fingertip_indices() const;
  void validate() const;
};

struct HandSample {
  Scene scene;
  Pose pose;
};

/// One random articulation and camera placement.
HandSample sample_hand(const SyntheticHandSpec& spec, RngStream& rng);

/// n rendered frames with exact joint labels. Sample i draws from rng.fork(i).
Dataset generate_synthetic(const SyntheticHandSpec& spec, int n, const RngStream& rng);

}  // namespace ren
