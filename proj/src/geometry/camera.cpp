#include "geometry/camera.h"

#include <cmath>
#include <string>

namespace grf {

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0) throw Error("cannot normalize a zero vector");
  return scale(a, 1.0 / n);
}

Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[1] * v[1] + m[2] * v[2], m[3] * v[0] + m[4] * v[1] + m[5] * v[2],
          m[6] * v[0] + m[7] * v[1] + m[8] * v[2]};
}

Vec3 mat_t_vec(const Mat3& m, const Vec3& v) {
  return {m[0] * v[0] + m[3] * v[1] + m[6] * v[2], m[1] * v[0] + m[4] * v[1] + m[7] * v[2],
          m[2] * v[0] + m[5] * v[1] + m[8] * v[2]};
}

Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
      c[i * 3 + j] = s;
    }
  return c;
}

void CameraIntrinsics::validate() const {
  if (focal_x <= 0 || focal_y <= 0) throw Error("intrinsics: focal lengths must be positive");
  if (width < 1 || height < 1) throw Error("intrinsics: image size must be at least 1x1");
}

void CameraPose::validate(double tol) const {
  // R R^T = I and det R = +1
  const Mat3& r = rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * r[j * 3 + k];
      const double expect = i == j ? 1.0 : 0.0;
      if (std::abs(s - expect) > tol) throw Error("pose: rotation is not orthonormal");
    }
  const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                     r[2] * (r[3] * r[7] - r[4] * r[6]);
  if (std::abs(det - 1.0) > tol) throw Error("pose: rotation determinant is not +1");
}

std::optional<PixelProjection> project(const Vec3& point, const CameraPose& pose,
                                       const CameraIntrinsics& intr) {
  // world -> camera: R^T (p - t) since the pose stores camera-to-world
  const Vec3 cam = mat_t_vec(pose.rotation, sub(point, pose.translation));
  if (cam[2] <= 0) return std::nullopt;
  PixelProjection pp;
  pp.depth = cam[2];
  pp.u = intr.focal_x * cam[0] / cam[2] + intr.principal_x;
  pp.v = intr.focal_y * cam[1] / cam[2] + intr.principal_y;
  if (pp.u < 0 || pp.u >= intr.width || pp.v < 0 || pp.v >= intr.height) return std::nullopt;
  return pp;
}

Ray pixel_ray(int u, int v, const CameraPose& pose, const CameraIntrinsics& intr, double t_near,
              double t_far) {
  if (u < 0 || u >= intr.width || v < 0 || v >= intr.height)
    throw Error("pixel_ray: pixel (" + std::to_string(u) + "," + std::to_string(v) +
                ") out of bounds");
  return ray_through(u + 0.5, v + 0.5, pose, intr, t_near, t_far);
}

Ray ray_through(double u, double v, const CameraPose& pose, const CameraIntrinsics& intr,
                double t_near, double t_far) {
  if (!(t_near >= 0) || !(t_near < t_far)) throw Error("ray_through: need 0 <= t_near < t_far");
  const Vec3 dir_cam = {(u - intr.principal_x) / intr.focal_x,
                        (v - intr.principal_y) / intr.focal_y, 1.0};
  Ray ray;
  ray.origin = pose.translation;
  ray.direction = normalized(mat_vec(pose.rotation, dir_cam));
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

Quat rotation_to_quaternion(const Mat3& r) {
  CameraPose check;
  check.rotation = r;
  check.validate(1e-5);
  // Shepperd's method, then fix the sign so w >= 0.
  double w, x, y, z;
  const double trace = r[0] + r[4] + r[8];
  if (trace > 0) {
    const double s = std::sqrt(trace + 1.0) * 2;
    w = 0.25 * s;
    x = (r[7] - r[5]) / s;
    y = (r[2] - r[6]) / s;
    z = (r[3] - r[1]) / s;
  } else if (r[0] > r[4] && r[0] > r[8]) {
    const double s = std::sqrt(1.0 + r[0] - r[4] - r[8]) * 2;
    w = (r[7] - r[5]) / s;
    x = 0.25 * s;
    y = (r[1] + r[3]) / s;
    z = (r[2] + r[6]) / s;
  } else if (r[4] > r[8]) {
    const double s = std::sqrt(1.0 + r[4] - r[0] - r[8]) * 2;
    w = (r[2] - r[6]) / s;
    x = (r[1] + r[3]) / s;
    y = 0.25 * s;
    z = (r[5] + r[7]) / s;
  } else {
    const double s = std::sqrt(1.0 + r[8] - r[0] - r[4]) * 2;
    w = (r[3] - r[1]) / s;
    x = (r[2] + r[6]) / s;
    y = (r[5] + r[7]) / s;
    z = 0.25 * s;
  }
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  if (w < 0) {
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
  return {w, x, y, z};
}

Mat3 quaternion_to_rotation(const Quat& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = normalized(sub(target, eye));
  Vec3 x = cross(z, up);
  if (norm(x) < 1e-9) x = cross(z, Vec3{1, 0, 0});  // looking straight along up
  x = normalized(x);
  const Vec3 y = cross(z, x);  // points "down" in world so image rows grow downward
  CameraPose pose;
  pose.rotation = {x[0], y[0], z[0], x[1], y[1], z[1], x[2], y[2], z[2]};  // columns = axes
  pose.translation = eye;
  return pose;
}

}  // namespace grf
