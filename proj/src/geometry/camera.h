#pragma once

#include <array>
#include <optional>

#include "core/dtype.h"

namespace grf {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<double, 9>;  // row-major
using Quat = std::array<double, 4>;  // (w, x, y, z), w >= 0

Vec3 add(const Vec3& a, const Vec3& b);
Vec3 sub(const Vec3& a, const Vec3& b);
Vec3 scale(const Vec3& a, double s);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);
Vec3 normalized(const Vec3& a);
Vec3 mat_vec(const Mat3& m, const Vec3& v);
Vec3 mat_t_vec(const Mat3& m, const Vec3& v);  // transpose(m) * v
Mat3 mat_mul(const Mat3& a, const Mat3& b);

struct CameraIntrinsics {
  double focal_x = 0, focal_y = 0;
  double principal_x = 0, principal_y = 0;
  int width = 0, height = 0;

  void validate() const;
};

// Camera-to-world pose. The camera looks down +z in its own frame; pixel
// (0,0) is top-left and rays pass through pixel centers.
struct CameraPose {
  Mat3 rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // camera-to-world
  Vec3 translation{0, 0, 0};                 // camera center, world units

  void validate(double tol = 1e-6) const;
};

struct Ray {
  Vec3 origin{0, 0, 0};
  Vec3 direction{0, 0, 1};  // unit
  double t_near = 0, t_far = 1;
};

struct PixelProjection {
  double u = 0, v = 0;  // pixel coordinates, (0,0) = top-left corner
  double depth = 0;     // camera-frame z
};

// Projects a world point; nullopt means outside the frustum (behind the
// camera or off-image), which downstream treats as "no information".
std::optional<PixelProjection> project(const Vec3& point, const CameraPose& pose,
                                       const CameraIntrinsics& intr);

// Ray through the center of pixel (u, v). Throws on out-of-bounds pixels.
Ray pixel_ray(int u, int v, const CameraPose& pose, const CameraIntrinsics& intr, double t_near,
              double t_far);

// Ray through continuous image coordinates (pixel_ray(u,v) == ray_through(u+0.5, v+0.5)).
Ray ray_through(double u, double v, const CameraPose& pose, const CameraIntrinsics& intr,
                double t_near, double t_far);

Quat rotation_to_quaternion(const Mat3& rotation);
Mat3 quaternion_to_rotation(const Quat& q);

// Pose looking from `eye` toward `target`, world +y up, image v axis downward.
CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 1, 0});

}  // namespace grf
