#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "ren/error.hpp"
#include "ren/geometry.hpp"

using namespace ren;

namespace {

const CameraIntrinsics kCam{220, 220, 63.5, 63.5};

DepthFrame plane(std::uint16_t depth, int size = 128) {
  DepthFrame f(size, size, kCam);
  std::fill(f.depth.begin(), f.depth.end(), depth);
  return f;
}

// Frame holding a flat disk of radius r px around the projection of p.
DepthFrame disk_frame(const Vec3& p, double r_px) {
  DepthFrame f(128, 128, kCam);
  const PixelDepth c = project(p, kCam);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (std::hypot(x - c.u, y - c.v) <= r_px) f.at(x, y) = static_cast<std::uint16_t>(std::lround(p.z));
  return f;
}

// Centroid, in patch pixels, of values below the threshold.
std::pair<double, double> blob_centroid(const PatchSample& s, float below) {
  double sx = 0, sy = 0, n = 0;
  for (int y = 0; y < s.size; ++y)
    for (int x = 0; x < s.size; ++x)
      if (s.patch[static_cast<std::size_t>(y) * s.size + x] < below) {
        sx += x;
        sy += y;
        n += 1;
      }
  REQUIRE(n > 0);
  return {sx / n, sy / n};
}

}  // namespace

TEST_CASE("projection round trip") {
  RngStream rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p{rng.uniform(-300, 300), rng.uniform(-300, 300), rng.uniform(50, 3000)};
    const PixelDepth q = project(p, kCam);
    CHECK(q.d == p.z);
    const Vec3 back = backproject(q.u, q.v, q.d, kCam);
    CHECK(back.x == doctest::Approx(p.x).epsilon(1e-12));
    CHECK(back.y == doctest::Approx(p.y).epsilon(1e-12));
    CHECK(back.z == p.z);
  }
  const PixelDepth c = project({0, 0, 500}, kCam);
  CHECK(c.u == 63.5);
  CHECK(c.v == 63.5);
  CHECK(project({100, 0, 500}, kCam).u == doctest::Approx(63.5 + 44));
  CHECK_THROWS_AS(project({0, 0, 0}, kCam), InputError);
  CHECK_THROWS_AS(backproject(1, 1, -1, kCam), InputError);
  CHECK_THROWS_AS(CameraIntrinsics({0, 1, 0, 0}).validate(), InputError);
}

TEST_CASE("segmentation centroid matches a brute-force recomputation") {
  DepthFrame f(40, 30, kCam);
  RngStream rng(2);
  for (auto& d : f.depth) d = static_cast<std::uint16_t>(rng.uniform(0, 2000));
  f.at(3, 3) = 100;   // on the near bound: excluded
  f.at(4, 4) = 1500;  // on the far bound: excluded
  double sx = 0, sy = 0, sz = 0, n = 0;
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      const double d = f.depth[static_cast<std::size_t>(y) * 40 + x];
      if (d <= 100 || d >= 1500) continue;
      sx += (x - kCam.cx) * d / kCam.fx;
      sy += (y - kCam.cy) * d / kCam.fy;
      sz += d;
      n += 1;
    }
  const Vec3 c = segment_and_center(f, 100, 1500);
  CHECK(c.x == doctest::Approx(sx / n).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(sy / n).epsilon(1e-12));
  CHECK(c.z == doctest::Approx(sz / n).epsilon(1e-12));
  CHECK_THROWS_AS(segment_and_center(plane(0, 16)), NoForegroundError);
  CHECK_THROWS_AS(segment_and_center(plane(2000, 16)), NoForegroundError);
  CHECK_THROWS_AS(segment_and_center(plane(500, 16), 600, 500), InputError);
}

TEST_CASE("crop normalizes depth to the box and pins missing or far values to +1") {
  CHECK(crop_half_window_px(75, 220, 500) == doctest::Approx(33.0));
  const Vec3 center{0, 0, 500};
  const PatchSample flat = crop_patch(plane(500), center, CropExtent::hand(), 32);
  CHECK(flat.size == 32);
  for (float v : flat.patch) CHECK(v == 0.0f);
  const PatchSample behind = crop_patch(plane(530), center, CropExtent::hand(), 32);
  for (float v : behind.patch) CHECK(v == doctest::Approx(0.4f));
  const PatchSample front = crop_patch(plane(440), center, CropExtent::hand(), 32);
  for (float v : front.patch) CHECK(v == doctest::Approx(-0.8f));
  for (std::uint16_t d : {0, 700, 400}) {
    const PatchSample s = crop_patch(plane(d), center, CropExtent::hand(), 16);
    for (float v : s.patch) CHECK(v == 1.0f);
  }
  CHECK(flat.center == center);
  CHECK(flat.extent == CropExtent::hand());
  CHECK_THROWS_AS(crop_patch(plane(500), center, CropExtent::hand(), 0), InputError);
  CHECK_THROWS_AS(crop_patch(plane(500), {0, 0, 50000}, CropExtent::hand(), 16), InputError);
}

TEST_CASE("a crop near the image border reads the far plane outside the frame") {
  const PatchSample s = crop_patch(plane(500), backproject(0, 63.5, 500, kCam), CropExtent::hand(), 32);
  CHECK(s.patch[16 * 32 + 0] == 1.0f);
  CHECK(s.patch[16 * 32 + 31] == 0.0f);
}

TEST_CASE("label normalization is invertible") {
  RngStream rng(3);
  Pose pose;
  for (int j = 0; j < 16; ++j) pose.joints.push_back({rng.uniform(-80, 80), rng.uniform(-80, 80), rng.uniform(400, 600)});
  const Vec3 center{5, -7, 510};
  const CropExtent e{75, 80, 90};
  const auto n = normalize_labels(pose, center, e);
  CHECK(n.size() == 48);
  CHECK(n[0] == doctest::Approx((pose.joints[0].x - 5) / 75));
  const Pose back = denormalize_labels(n, center, e);
  for (int j = 0; j < 16; ++j) {
    CHECK(back.joints[j].x == doctest::Approx(pose.joints[j].x).epsilon(1e-12));
    CHECK(back.joints[j].z == doctest::Approx(pose.joints[j].z).epsilon(1e-12));
  }
  CHECK_THROWS_AS(denormalize_labels(std::vector<double>{1, 2}, center, e), InputError);
  CHECK_THROWS_AS(denormalize_labels(std::vector<double>{1, NAN, 2}, center, e), NumericError);
}

TEST_CASE("label transforms") {
  const std::vector<double> labels{0.5, 0, 0.2, 0, -0.25, -0.4};
  SUBCASE("identity is exact") {
    CHECK(transform_labels(labels, {}, 96) == labels);
  }
  SUBCASE("a quarter turn maps +x to +y") {
    AugmentParams a;
    a.rotation_deg = 90;
    const auto out = transform_labels(labels, a, 96);
    CHECK(out[0] == doctest::Approx(0).epsilon(1e-15));
    CHECK(std::abs(out[0]) < 1e-15);
    CHECK(out[1] == doctest::Approx(0.5));
    CHECK(out[2] == 0.2);
    CHECK(out[3] == doctest::Approx(0.25));
  }
  SUBCASE("scale divides every coordinate") {
    AugmentParams a;
    a.scale = 1.25;
    const auto out = transform_labels(labels, a, 96);
    for (std::size_t i = 0; i < labels.size(); ++i) CHECK(out[i] == doctest::Approx(labels[i] / 1.25));
  }
  SUBCASE("translation is in patch pixels") {
    AugmentParams a;
    a.tx = 4.8;
    a.ty = -9.6;
    const auto out = transform_labels(labels, a, 96);
    CHECK(out[0] == doctest::Approx(0.6));
    CHECK(out[1] == doctest::Approx(-0.2));
    CHECK(out[2] == 0.2);
  }
  SUBCASE("flip negates x and swaps mirrored joints") {
    AugmentParams a;
    a.flip = true;
    const std::vector<int> mirror{1, 0};
    const auto out = transform_labels(labels, a, 96, mirror);
    CHECK(out == std::vector<double>{0, -0.25, -0.4, -0.5, 0, 0.2});
    CHECK_THROWS_AS(transform_labels(labels, a, 96, std::vector<int>{0}), InputError);
  }
}

TEST_CASE("augmentation draws stay in range and replay under a seed") {
  AugmentRanges r;
  RngStream a(4), b(4);
  for (int i = 0; i < 500; ++i) {
    const AugmentParams p = draw_augmentation(a, r);
    const AugmentParams q = draw_augmentation(b, r);
    CHECK(p.tx == q.tx);
    CHECK(p.rotation_deg == q.rotation_deg);
    CHECK(std::abs(p.tx) <= 10);
    CHECK(std::abs(p.ty) <= 10);
    CHECK(p.scale >= 0.9);
    CHECK(p.scale <= 1.1);
    CHECK(std::abs(p.rotation_deg) <= 180);
    CHECK_FALSE(p.flip);
  }
  RngStream c(5);
  CHECK(draw_augmentation(c, AugmentRanges::none()).is_identity());
  AugmentRanges bad;
  bad.scale_min = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = {};
  bad.flip_probability = 2;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("identity augmentation leaves the crop bit-identical") {
  const DepthFrame f = disk_frame({10, -5, 480}, 12);
  const Vec3 center{0, 0, 480};
  const PatchSample plain = crop_patch(f, center, CropExtent::hand(), 48);
  const PatchSample composed = crop_patch(f, center, CropExtent::hand(), 48, AugmentParams{});
  CHECK(plain.patch == composed.patch);
  PatchSample labeled = plain;
  labeled.labels = {0.1, 0.2, 0.3};
  const PatchSample same = apply_augmentation(labeled, AugmentParams{});
  CHECK(same.patch == plain.patch);
  CHECK(same.labels == labeled.labels);
}

TEST_CASE("augmented labels follow the augmented image") {
  const Vec3 joint{14, -9, 480};
  const DepthFrame f = disk_frame(joint, 4);
  const Vec3 center{0, 0, 500};
  const CropExtent e = CropExtent::hand();
  const int size = 96;
  const auto labels = normalize_labels(Pose{{joint}}, center, e);
  AugmentRanges ranges;
  ranges.flip_probability = 0.5;
  RngStream rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    const AugmentParams aug = draw_augmentation(rng, ranges);
    CAPTURE(aug.rotation_deg);
    CAPTURE(aug.scale);
    const auto moved = transform_labels(labels, aug, size);
    const double expect_x = normalized_to_pixel(moved[0], size);
    const double expect_y = normalized_to_pixel(moved[1], size);

    const PatchSample composed = crop_patch(f, center, e, size, aug);
    const auto [cx, cy] = blob_centroid(composed, 0.5f);
    CHECK(std::hypot(cx - expect_x, cy - expect_y) < 1.0);
    // Depth of the blob scales with the box.
    const float inside = composed.patch[static_cast<std::size_t>(std::lround(cy)) * size + std::lround(cx)];
    CHECK(inside == doctest::Approx(moved[2]).epsilon(1e-3));

    PatchSample base = crop_patch(f, center, e, size);
    base.labels = labels;
    const PatchSample warped = apply_augmentation(base, aug);
    const auto [wx, wy] = blob_centroid(warped, 0.5f);
    CHECK(std::hypot(wx - expect_x, wy - expect_y) < 1.0);
    CHECK(warped.labels == moved);
    CHECK(warped.extent.x == doctest::Approx(e.x * aug.scale));
  }
}

TEST_CASE("patch coordinate helpers are inverse") {
  for (int size : {24, 48, 96}) {
    for (int i = 0; i < size; ++i) CHECK(normalized_to_pixel(pixel_to_normalized(i, size), size) == doctest::Approx(i));
    CHECK(pixel_to_normalized(-0.5, size) == -1.0);
    CHECK(pixel_to_normalized(size - 0.5, size) == 1.0);
  }
}
