#include "ren/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ren/error.hpp"
#include "ren/text.hpp"

namespace ren {
namespace {

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
Vec3 cross(const Vec3& a, const Vec3& b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
Vec3 normalized(const Vec3& v) { return (1.0 / norm(v)) * v; }
double rad(double deg) { return deg * std::numbers::pi / 180.0; }

// Rodrigues rotation of v about unit axis k.
Vec3 rotate(const Vec3& v, const Vec3& k, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return c * v + s * cross(k, v) + (dot(k, v) * (1 - c)) * k;
}

struct Mat3 {
  double m[3][3];
  Vec3 operator*(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
};

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
  return r;
}

Mat3 rot_x(double a) { return {{{1, 0, 0}, {0, std::cos(a), -std::sin(a)}, {0, std::sin(a), std::cos(a)}}}; }
Mat3 rot_y(double a) { return {{{std::cos(a), 0, std::sin(a)}, {0, 1, 0}, {-std::sin(a), 0, std::cos(a)}}}; }
Mat3 rot_z(double a) { return {{{std::cos(a), -std::sin(a), 0}, {std::sin(a), std::cos(a), 0}, {0, 0, 1}}}; }

}  // namespace

std::optional<double> intersect(const Vec3& dir, const Sphere& s) {
  const double a = dot(dir, dir);
  const double b = -2.0 * dot(dir, s.center);
  const double c = dot(s.center, s.center) - s.radius * s.radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double root = std::sqrt(disc);
  const double t0 = (-b - root) / (2 * a);
  if (t0 > 0) return t0;
  const double t1 = (-b + root) / (2 * a);
  if (t1 > 0) return t1;
  return std::nullopt;
}

std::optional<double> intersect(const Vec3& dir, const Capsule& cap) {
  // Union of the open cylinder and the two end balls.
  std::optional<double> best;
  const auto keep = [&best](std::optional<double> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  keep(intersect(dir, Sphere{cap.a, cap.radius}));
  keep(intersect(dir, Sphere{cap.b, cap.radius}));

  const Vec3 axis = cap.b - cap.a;
  const double len2 = dot(axis, axis);
  if (len2 <= 0) return best;
  // Ray origin is the camera at 0, so origin - a = -a.
  const Vec3 oa = -1.0 * cap.a;
  const double ba_rd = dot(axis, dir);
  const double ba_oa = dot(axis, oa);
  const double a = len2 * dot(dir, dir) - ba_rd * ba_rd;
  const double b = len2 * dot(dir, oa) - ba_oa * ba_rd;
  const double c = len2 * dot(oa, oa) - ba_oa * ba_oa - cap.radius * cap.radius * len2;
  if (std::abs(a) < 1e-12) return best;
  const double h = b * b - a * c;
  if (h < 0) return best;
  const double t = (-b - std::sqrt(h)) / a;
  const double along = ba_oa + t * ba_rd;
  if (t > 0 && along > 0 && along < len2) keep(t);
  return best;
}

std::vector<double> render_depth(const Scene& scene, const CameraIntrinsics& k, int width, int height) {
  std::vector<double> depth(static_cast<std::size_t>(width) * height, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      // z component 1 makes the ray parameter equal to depth.
      const Vec3 dir{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : scene.spheres) {
        if (auto t = intersect(dir, s)) best = std::min(best, *t);
      }
      for (const auto& c : scene.capsules) {
        if (auto t = intersect(dir, c)) best = std::min(best, *t);
      }
      if (std::isfinite(best)) depth[static_cast<std::size_t>(y) * width + x] = best;
    }
  }
  return depth;
}

SyntheticHandSpec SyntheticHandSpec::default_hand() {
  SyntheticHandSpec spec;
  spec.fingers = {
      {-75, {32, 28, 24}, {11, 10, 9}},  // thumb
      {-27, {42, 26, 20}, {9, 8.5, 7.5}},
      {-9, {46, 29, 22}, {9, 8.5, 7.5}},
      {9, {43, 27, 21}, {8.5, 8, 7}},
      {27, {34, 21, 18}, {8, 7.5, 6.5}},
  };
  return spec;
}

SyntheticHandSpec SyntheticHandSpec::from_map(const std::map<std::string, std::string>& kv) {
  SyntheticHandSpec s = default_hand();
  for (const auto& [k, v] : kv) {
    if (k == "palm_radius") s.palm_radius = text::parse_double(v, k);
    else if (k == "mcp_flex_max") s.mcp_flex_max_deg = text::parse_double(v, k);
    else if (k == "pip_flex_max") s.pip_flex_max_deg = text::parse_double(v, k);
    else if (k == "dip_flex_max") s.dip_flex_max_deg = text::parse_double(v, k);
    else if (k == "abduction_max") s.abduction_max_deg = text::parse_double(v, k);
    else if (k == "roll_range") s.roll_range_deg = text::parse_double(v, k);
    else if (k == "yaw_range") s.yaw_range_deg = text::parse_double(v, k);
    else if (k == "pitch_range") s.pitch_range_deg = text::parse_double(v, k);
    else if (k == "depth_min") s.depth_min_mm = text::parse_double(v, k);
    else if (k == "depth_max") s.depth_max_mm = text::parse_double(v, k);
    else if (k == "lateral_range") s.lateral_range_mm = text::parse_double(v, k);
    else if (k == "width") s.width = static_cast<int>(text::parse_int(v, k));
    else if (k == "height") s.height = static_cast<int>(text::parse_int(v, k));
    else if (k == "fx") s.intrinsics.fx = text::parse_double(v, k);
    else if (k == "fy") s.intrinsics.fy = text::parse_double(v, k);
    else if (k == "cx") s.intrinsics.cx = text::parse_double(v, k);
    else if (k == "cy") s.intrinsics.cy = text::parse_double(v, k);
    else if (k == "max_retries") s.max_retries = static_cast<int>(text::parse_int(v, k));
    else if (k == "fingers") {
      const auto n = text::parse_int(v, k);
      if (n < 0 || n > 5) throw InputError("fingers must be between 0 and 5");
      s.fingers.resize(static_cast<std::size_t>(n));
    } else {
      throw InputError("unknown synthetic spec key '" + k + "'");
    }
  }
  s.validate();
  return s;
}

std::map<std::string, std::string> SyntheticHandSpec::to_map() const {
  using text::format_double;
  return {{"palm_radius", format_double(palm_radius)},
          {"fingers", std::to_string(fingers.size())},
          {"mcp_flex_max", format_double(mcp_flex_max_deg)},
          {"pip_flex_max", format_double(pip_flex_max_deg)},
          {"dip_flex_max", format_double(dip_flex_max_deg)},
          {"abduction_max", format_double(abduction_max_deg)},
          {"roll_range", format_double(roll_range_deg)},
          {"yaw_range", format_double(yaw_range_deg)},
          {"pitch_range", format_double(pitch_range_deg)},
          {"depth_min", format_double(depth_min_mm)},
          {"depth_max", format_double(depth_max_mm)},
          {"lateral_range", format_double(lateral_range_mm)},
          {"width", std::to_string(width)},
          {"height", std::to_string(height)},
          {"fx", format_double(intrinsics.fx)},
          {"fy", format_double(intrinsics.fy)},
          {"cx", format_double(intrinsics.cx)},
          {"cy", format_double(intrinsics.cy)},
          {"max_retries", std::to_string(max_retries)}};
}

std::vector<int> SyntheticHandSpec::fingertip_indices() const {
  std::vector<int> out;
  for (int f = 0; f < static_cast<int>(fingers.size()); ++f) out.push_back(3 + 3 * f);
  return out;
}

void SyntheticHandSpec::validate() const {
  if (palm_radius < 0) throw InputError("palm radius must be >= 0");
  for (const auto& f : fingers) {
    for (int i = 0; i < 3; ++i) {
      if (!(f.lengths[i] > 0) || !(f.radii[i] > 0)) throw InputError("finger lengths and radii must be > 0");
    }
  }
  if (!(depth_min_mm > 0) || depth_max_mm < depth_min_mm) throw InputError("depth range must satisfy 0 < min <= max");
  if (width < 2 || height < 2) throw InputError("synthetic frame must be at least 2x2");
  if (lateral_range_mm < 0 || roll_range_deg < 0 || yaw_range_deg < 0 || pitch_range_deg < 0) {
    throw InputError("pose ranges must be >= 0");
  }
  if (max_retries < 1) throw InputError("max_retries must be >= 1");
  intrinsics.validate();
}

HandSample sample_hand(const SyntheticHandSpec& spec, RngStream& rng) {
  // Hand frame: fingers point along -y, palm faces the camera (-z).
  const Vec3 palm_normal{0, 0, -1};
  std::vector<Vec3> local{{0, 0, 0}};
  std::vector<Capsule> local_caps;
  for (const auto& f : spec.fingers) {
    const double root = rad(f.root_angle_deg);
    const Vec3 radial{std::sin(root), -std::cos(root), 0};
    Vec3 p = (0.85 * spec.palm_radius) * radial;
    const double abduction = rad(rng.uniform(-spec.abduction_max_deg, spec.abduction_max_deg));
    const Vec3 dir0 = rotate(radial, palm_normal, abduction);
    const Vec3 flex_axis = normalized(cross(dir0, palm_normal));
    const double flex[3] = {rad(rng.uniform(0, spec.mcp_flex_max_deg)), rad(rng.uniform(0, spec.pip_flex_max_deg)),
                            rad(rng.uniform(0, spec.dip_flex_max_deg))};
    double total = 0;
    for (int s = 0; s < 3; ++s) {
      total += flex[s];
      const Vec3 next = p + f.lengths[s] * rotate(dir0, flex_axis, total);
      local_caps.push_back({p, next, f.radii[s]});
      local.push_back(next);
      p = next;
    }
  }
  const Mat3 r = mul(rot_z(rad(rng.uniform(-spec.roll_range_deg, spec.roll_range_deg))),
                     mul(rot_y(rad(rng.uniform(-spec.yaw_range_deg, spec.yaw_range_deg))),
                         rot_x(rad(rng.uniform(-spec.pitch_range_deg, spec.pitch_range_deg)))));
  const Vec3 t{rng.uniform(-spec.lateral_range_mm, spec.lateral_range_mm),
               rng.uniform(-spec.lateral_range_mm, spec.lateral_range_mm),
               rng.uniform(spec.depth_min_mm, spec.depth_max_mm)};

  HandSample out;
  for (const auto& p : local) out.pose.joints.push_back(r * p + t);
  if (spec.palm_radius > 0) out.scene.spheres.push_back({t, spec.palm_radius});
  for (const auto& c : local_caps) out.scene.capsules.push_back({r * c.a + t, r * c.b + t, c.radius});
  return out;
}

Dataset generate_synthetic(const SyntheticHandSpec& spec, int n, const RngStream& rng) {
  spec.validate();
  if (n < 1) throw InputError("number of synthetic samples must be >= 1");
  Dataset ds;
  ds.config.intrinsics = spec.intrinsics;
  ds.config.joints = spec.joint_count();
  ds.config.extent = CropExtent::hand();
  ds.config.fingertips = spec.fingertip_indices();
  const double margin = 2.0;
  for (int i = 0; i < n; ++i) {
    RngStream sample_rng = rng.fork(static_cast<std::uint64_t>(i));
    bool accepted = false;
    for (int attempt = 0; attempt < spec.max_retries && !accepted; ++attempt) {
      HandSample hand = sample_hand(spec, sample_rng);
      bool on_screen = true;
      for (const auto& j : hand.pose.joints) {
        if (!(j.z > 0)) {
          on_screen = false;
          break;
        }
        const PixelDepth p = project(j, spec.intrinsics);
        if (p.u < margin || p.v < margin || p.u > spec.width - 1 - margin || p.v > spec.height - 1 - margin) {
          on_screen = false;
          break;
        }
      }
      if (!on_screen || hand.scene.empty()) continue;
      const auto depth = render_depth(hand.scene, spec.intrinsics, spec.width, spec.height);
      DepthFrame frame(spec.width, spec.height, spec.intrinsics);
      bool any = false;
      for (std::size_t p = 0; p < depth.size(); ++p) {
        const double d = std::round(depth[p]);
        if (d >= 1 && d <= 65535) {
          frame.depth[p] = static_cast<std::uint16_t>(d);
          any = true;
        }
      }
      if (!any) continue;
      ds.frames.push_back(std::move(frame));
      ds.poses.push_back(std::move(hand.pose));
      accepted = true;
    }
    if (!accepted) {
      throw Error("synthetic sample " + std::to_string(i) + ": no visible on-screen hand after " +
                  std::to_string(spec.max_retries) + " attempts");
    }
  }
  return ds;
}

}  // namespace ren
