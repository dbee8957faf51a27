#include "scene/procgen.h"

#include <algorithm>
#include <cmath>

#include "core/rng.h"

namespace grf {

namespace {

Vec3 random_color(Rng& rng) {
  return {rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0), rng.uniform(0.15, 1.0)};
}

std::optional<Hit> intersect_sphere(const Primitive& p, const Vec3& o, const Vec3& d,
                                    double t_min) {
  const Vec3 oc = sub(o, p.center);
  const double r = p.size[0];
  const double a = dot(d, d);
  const double b = 2.0 * dot(oc, d);
  const double c = dot(oc, oc) - r * r;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= t_min) t = (-b + sq) / (2 * a);
  if (t <= t_min) return std::nullopt;
  Hit h;
  h.t = t;
  h.point = add(o, scale(d, t));
  h.normal = normalized(sub(h.point, p.center));
  return h;
}

std::optional<Hit> intersect_box(const Primitive& p, const Vec3& o, const Vec3& d, double t_min) {
  const Vec3 lo = sub(p.center, p.size);
  const Vec3 hi = add(p.center, p.size);
  double t0 = t_min, t1 = 1e30;
  int axis0 = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (axis0 < 0) return std::nullopt;  // origin inside the box
  Hit h;
  h.t = t0;
  h.point = add(o, scale(d, t0));
  Vec3 n{0, 0, 0};
  n[axis0] = d[axis0] > 0 ? -1.0 : 1.0;
  h.normal = n;
  return h;
}

Vec3 primitive_albedo(const Primitive& p, const Vec3& point) {
  if (!p.checker) return p.albedo;
  const Vec3 local = sub(point, p.center);
  int parity = 0;
  for (int a = 0; a < 3; ++a)
    parity += static_cast<int>(std::floor(local[a] / p.checker_cell + 1e-7));
  return (parity & 1) ? p.albedo2 : p.albedo;
}

}  // namespace

Scene generate_scene(uint64_t seed, SceneTemplate tmpl) {
  Rng rng = Rng::stream(seed, /*stream=*/0x5ce7e);
  Scene scene;
  scene.seed = seed;
  if (tmpl == SceneTemplate::Occlusion) {
    // Sphere behind a wall: hidden from cameras on the +x side.
    Primitive sphere;
    sphere.kind = Primitive::Kind::Sphere;
    sphere.center = {-0.3 + rng.uniform(-0.05, 0.05), rng.uniform(-0.08, 0.08),
                     rng.uniform(-0.08, 0.08)};
    sphere.size = {rng.uniform(0.28, 0.38), 0, 0};
    sphere.size[1] = sphere.size[2] = sphere.size[0];
    sphere.albedo = random_color(rng);
    Primitive wall;
    wall.kind = Primitive::Kind::Box;
    wall.center = {0.45 + rng.uniform(-0.03, 0.03), rng.uniform(-0.05, 0.05),
                   rng.uniform(-0.05, 0.05)};
    wall.size = {rng.uniform(0.08, 0.12), rng.uniform(0.42, 0.52), rng.uniform(0.42, 0.52)};
    wall.albedo = random_color(rng);
    wall.checker = rng.uniform() < 0.5;
    wall.albedo2 = random_color(rng);
    scene.primitives = {sphere, wall};
    return scene;
  }
  const int count = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < count; ++i) {
    Primitive p;
    p.kind = rng.uniform() < 0.5 ? Primitive::Kind::Sphere : Primitive::Kind::Box;
    if (p.kind == Primitive::Kind::Sphere) {
      const double r = rng.uniform(0.16, 0.4);
      p.size = {r, r, r};
    } else {
      p.size = {rng.uniform(0.12, 0.38), rng.uniform(0.12, 0.38), rng.uniform(0.12, 0.38)};
    }
    for (int a = 0; a < 3; ++a) {
      const double margin = 0.98 - p.size[a];
      p.center[a] = rng.uniform(-0.5, 0.5);
      p.center[a] = std::clamp(p.center[a], -margin, margin);
    }
    p.albedo = random_color(rng);
    if (rng.uniform() < 0.35) {
      p.checker = true;
      p.albedo2 = random_color(rng);
      p.checker_cell = rng.uniform(0.1, 0.25);
    }
    scene.primitives.push_back(p);
  }
  return scene;
}

std::optional<Hit> trace_ray(const Scene& scene, const Vec3& origin, const Vec3& dir,
                             double t_min) {
  std::optional<Hit> best;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const Primitive& p = scene.primitives[i];
    auto h = p.kind == Primitive::Kind::Sphere ? intersect_sphere(p, origin, dir, t_min)
                                               : intersect_box(p, origin, dir, t_min);
    if (h && (!best || h->t < best->t)) {
      h->primitive = static_cast<int>(i);
      best = h;
    }
  }
  return best;
}

Vec3 shade(const Scene& scene, const Hit& hit, const Lighting& lighting) {
  const Primitive& p = scene.primitives[static_cast<size_t>(hit.primitive)];
  const Vec3 albedo = primitive_albedo(p, hit.point);
  const double diffuse = std::max(0.0, dot(hit.normal, lighting.direction));
  const double level = lighting.ambient + (1.0 - lighting.ambient) * diffuse;
  return scale(albedo, level);
}

Image raytrace_gt(const Scene& scene, const CameraPose& pose, const CameraIntrinsics& intr,
                  const Lighting& lighting, const Vec3& background, std::vector<float>* depth_out) {
  intr.validate();
  pose.validate();
  Image img(intr.width, intr.height);
  if (depth_out) depth_out->assign(img.pixel_count(), 0.0f);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Ray ray = pixel_ray(x, y, pose, intr, 1e-4, 1e4);
      const auto hit = trace_ray(scene, ray.origin, ray.direction);
      Vec3 color = background;
      if (hit) {
        color = shade(scene, *hit, lighting);
        if (depth_out)
          (*depth_out)[static_cast<size_t>(y) * intr.width + x] = static_cast<float>(hit->t);
      }
      for (int c = 0; c < 3; ++c)
        img.at(x, y, c) = static_cast<float>(std::clamp(color[static_cast<size_t>(c)], 0.0, 1.0));
    }
  }
  return img;
}

}  // namespace grf
