#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geometry/camera.h"
#include "io/image.h"

namespace grf {

struct Primitive {
  enum class Kind { Sphere, Box };
  Kind kind = Kind::Sphere;
  Vec3 center{0, 0, 0};
  Vec3 size{0.3, 0.3, 0.3};  // sphere: radius in [0]; box: half extents
  Vec3 albedo{0.8, 0.2, 0.2};
  bool checker = false;
  Vec3 albedo2{0.9, 0.9, 0.9};
  double checker_cell = 0.2;
};

struct Aabb {
  Vec3 lo{-1, -1, -1};
  Vec3 hi{1, 1, 1};
  Vec3 center() const { return scale(add(lo, hi), 0.5); }
  Vec3 half_extent() const { return scale(sub(hi, lo), 0.5); }
  bool contains(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    return true;
  }
};

struct Scene {
  std::vector<Primitive> primitives;
  Aabb bounds;
  uint64_t seed = 0;
};

enum class SceneTemplate { Random, Occlusion };

// Deterministic in (seed, tmpl). Random scenes hold 1-4 primitives inside the
// unit-ish bounds; the occlusion template places a wall box that hides a
// sphere from the +x half of the view sphere.
Scene generate_scene(uint64_t seed, SceneTemplate tmpl = SceneTemplate::Random);

struct Lighting {
  Vec3 direction{0.40824829, 0.81649658, 0.40824829};  // unit, towards the light
  double ambient = 0.3;
};

struct Hit {
  double t = 0;
  Vec3 point{0, 0, 0};
  Vec3 normal{0, 0, 0};
  int primitive = -1;
};

// Closest analytic ray/primitive intersection with t > t_min.
std::optional<Hit> trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir,
                             double t_min = 1e-6);

Vec3 shade(const Scene& scene, const Hit& hit, const Lighting& lighting);

// Ground-truth renderer: Lambertian + ambient, no shadows, background where
// the ray escapes. Optional per-pixel ray-parameter depth (0 = miss).
Image raytrace_gt(const Scene& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                  const Lighting& lighting = Lighting{}, const Vec3& background = {0, 0, 0},
                  std::vector<float>* depth_out = nullptr);

}  // namespace grf
