#include <cmath>

#include "core/rng.h"
#include "doctest.h"
#include "geometry/camera.h"

using namespace grf;

namespace {

CameraIntrinsics test_intrinsics() {
  CameraIntrinsics intr;
  intr.focal_x = intr.focal_y = 100;
  intr.principal_x = intr.principal_y = 64;
  intr.width = intr.height = 128;
  return intr;
}

Mat3 rotation_about_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c, 0, s, 0, 1, 0, -s, 0, c};
}

Quat random_unit_quat(Rng& rng) {
  Quat q;
  double n = 0;
  for (auto& v : q) {
    v = rng.normal();
  }
  for (double v : q) n += v * v;
  n = std::sqrt(n);
  for (auto& v : q) v /= n;
  if (q[0] < 0)
    for (auto& v : q) v = -v;
  return q;
}

}  // namespace

TEST_CASE("project: pinhole examples") {
  const CameraPose pose;  // identity
  const CameraIntrinsics intr = test_intrinsics();

  auto on_axis = project({0, 0, 1}, pose, intr);
  REQUIRE(on_axis.has_value());
  CHECK(on_axis->u == doctest::Approx(64));
  CHECK(on_axis->v == doctest::Approx(64));
  CHECK(on_axis->depth == doctest::Approx(1));

  auto off_axis = project({0.32, 0, 1}, pose, intr);
  REQUIRE(off_axis.has_value());
  CHECK(off_axis->u == doctest::Approx(96));
  CHECK(off_axis->v == doctest::Approx(64));

  CHECK_FALSE(project({0, 0, -1}, pose, intr).has_value());  // behind the camera
  CHECK_FALSE(project({5, 0, 1}, pose, intr).has_value());   // off image
}

TEST_CASE("pixel_ray: principal point and bounds") {
  CameraIntrinsics intr = test_intrinsics();
  intr.principal_x = intr.principal_y = 64.5;  // pixel (64,64) center
  const CameraPose pose;
  const Ray ray = pixel_ray(64, 64, pose, intr, 0.1, 10.0);
  CHECK(ray.direction[0] == doctest::Approx(0));
  CHECK(ray.direction[1] == doctest::Approx(0));
  CHECK(ray.direction[2] == doctest::Approx(1));
  CHECK_THROWS_AS(pixel_ray(-1, 0, pose, intr, 0.1, 10.0), Error);
  CHECK_THROWS_AS(pixel_ray(0, 128, pose, intr, 0.1, 10.0), Error);
  CHECK_THROWS_AS(pixel_ray(0, 0, pose, intr, 5.0, 1.0), Error);
}

TEST_CASE("pixel_ray: 90 degree yaw rotates the direction") {
  CameraPose pose;
  pose.rotation = rotation_about_y(3.14159265358979323846 / 2);
  const CameraIntrinsics intr = test_intrinsics();
  const Ray ray = pixel_ray(63, 63, pose, intr, 0.1, 10.0);
  // camera +z now points along world +x
  CHECK(dot(ray.direction, Vec3{1, 0, 0}) > 0.999);
}

TEST_CASE("project / pixel_ray round trip over random cameras") {
  Rng rng(17);
  const CameraIntrinsics intr = test_intrinsics();
  for (int trial = 0; trial < 500; ++trial) {
    const Quat q = random_unit_quat(rng);
    CameraPose pose;
    pose.rotation = quaternion_to_rotation(q);
    pose.translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const int u = static_cast<int>(rng.below(static_cast<uint64_t>(intr.width)));
    const int v = static_cast<int>(rng.below(static_cast<uint64_t>(intr.height)));
    const Ray ray = pixel_ray(u, v, pose, intr, 0.2, 8.0);
    CHECK(std::abs(norm(ray.direction) - 1.0) < 1e-9);
    const double t = rng.uniform(0.3, 7.5);
    const auto pp = project(add(ray.origin, scale(ray.direction, t)), pose, intr);
    REQUIRE(pp.has_value());
    CHECK(std::abs(pp->u - (u + 0.5)) < 1e-5);
    CHECK(std::abs(pp->v - (v + 0.5)) < 1e-5);
  }
}

TEST_CASE("project: invariant under a shared rigid transform") {
  Rng rng(23);
  const CameraIntrinsics intr = test_intrinsics();
  for (int trial = 0; trial < 50; ++trial) {
    CameraPose pose;
    pose.rotation = quaternion_to_rotation(random_unit_quat(rng));
    pose.translation = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Vec3 point{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

    const Mat3 rig = quaternion_to_rotation(random_unit_quat(rng));
    const Vec3 shift{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CameraPose moved;
    moved.rotation = mat_mul(rig, pose.rotation);
    moved.translation = add(mat_vec(rig, pose.translation), shift);
    const Vec3 moved_point = add(mat_vec(rig, point), shift);

    const auto a = project(point, pose, intr);
    const auto b = project(moved_point, moved, intr);
    CHECK(a.has_value() == b.has_value());
    if (a && b) {
      CHECK(a->u == doctest::Approx(b->u).epsilon(1e-9));
      CHECK(a->v == doctest::Approx(b->v).epsilon(1e-9));
      CHECK(a->depth == doctest::Approx(b->depth).epsilon(1e-9));
    }
  }
}

TEST_CASE("rotation_to_quaternion: fixed cases and round trip") {
  const Mat3 identity{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Quat q = rotation_to_quaternion(identity);
  CHECK(q[0] == doctest::Approx(1));
  CHECK(q[1] == doctest::Approx(0));
  CHECK(q[2] == doctest::Approx(0));
  CHECK(q[3] == doctest::Approx(0));

  const Mat3 z180{-1, 0, 0, 0, -1, 0, 0, 0, 1};
  q = rotation_to_quaternion(z180);
  CHECK(std::abs(q[0]) < 1e-12);
  CHECK(std::abs(q[1]) < 1e-12);
  CHECK(std::abs(q[2]) < 1e-12);
  CHECK(q[3] == doctest::Approx(1));

  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Quat src = random_unit_quat(rng);
    const Mat3 rot = quaternion_to_rotation(src);
    const Quat back = rotation_to_quaternion(rot);
    const Mat3 again = quaternion_to_rotation(back);
    CHECK(back[0] >= 0);
    for (int i = 0; i < 9; ++i) CHECK(std::abs(rot[i] - again[i]) < 1e-6);
  }

  Mat3 skewed = identity;
  skewed[1] = 0.2;  // not orthonormal
  CHECK_THROWS_AS(rotation_to_quaternion(skewed), Error);
}

TEST_CASE("look_at: camera faces the target, image rows run downward") {
  const CameraPose pose = look_at({0, 0, -3}, {0, 0, 0});
  // forward = third column
  CHECK(pose.rotation[2] == doctest::Approx(0));
  CHECK(pose.rotation[5] == doctest::Approx(0));
  CHECK(pose.rotation[8] == doctest::Approx(1));
  // image y axis (second column) points world-down
  CHECK(pose.rotation[4] < -0.9);
  pose.validate();

  // straight-down pose falls back to a valid frame
  const CameraPose top = look_at({0, 3, 0}, {0, 0, 0});
  top.validate();
  CHECK(dot(mat_vec(top.rotation, {0, 0, 1}), Vec3{0, -1, 0}) > 0.999);
}
