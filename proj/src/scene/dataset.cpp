#include "scene/dataset.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "core/rng.h"
#include "json.hpp"

namespace grf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json vec3_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw IoError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json transform_json(const CameraPose& pose) {
  json m = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m.push_back(pose.rotation[r * 3 + c]);
    m.push_back(pose.translation[static_cast<size_t>(r)]);
  }
  for (double v : {0.0, 0.0, 0.0, 1.0}) m.push_back(v);
  return m;
}

CameraPose pose_from_transform(const json& m) {
  if (!m.is_array() || m.size() != 16) throw IoError("transform must hold 16 numbers");
  CameraPose pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose.rotation[r * 3 + c] = m[r * 4 + c].get<double>();
    pose.translation[static_cast<size_t>(r)] = m[r * 4 + 3].get<double>();
  }
  const double bottom[4] = {m[12].get<double>(), m[13].get<double>(), m[14].get<double>(),
                            m[15].get<double>()};
  if (bottom[0] != 0 || bottom[1] != 0 || bottom[2] != 0 || bottom[3] != 1)
    throw IoError("transform bottom row must be 0 0 0 1");
  try {
    pose.validate(1e-5);
  } catch (const Error& e) {
    throw IoError(std::string("non-rigid camera transform: ") + e.what());
  }
  return pose;
}

json scene_params_json(const Scene& scene) {
  json prims = json::array();
  for (const Primitive& p : scene.primitives) {
    prims.push_back({{"kind", p.kind == Primitive::Kind::Sphere ? "sphere" : "box"},
                     {"center", vec3_json(p.center)},
                     {"size", vec3_json(p.size)},
                     {"albedo", vec3_json(p.albedo)},
                     {"checker", p.checker},
                     {"albedo2", vec3_json(p.albedo2)},
                     {"checker_cell", p.checker_cell}});
  }
  return {{"seed", scene.seed},
          {"bounds_lo", vec3_json(scene.bounds.lo)},
          {"bounds_hi", vec3_json(scene.bounds.hi)},
          {"primitives", prims}};
}

Scene scene_params_from(const json& j) {
  Scene s;
  s.seed = j.at("seed").get<uint64_t>();
  s.bounds.lo = vec3_from(j.at("bounds_lo"));
  s.bounds.hi = vec3_from(j.at("bounds_hi"));
  for (const json& pj : j.at("primitives")) {
    Primitive p;
    p.kind = pj.at("kind").get<std::string>() == "sphere" ? Primitive::Kind::Sphere
                                                          : Primitive::Kind::Box;
    p.center = vec3_from(pj.at("center"));
    p.size = vec3_from(pj.at("size"));
    p.albedo = vec3_from(pj.at("albedo"));
    p.checker = pj.at("checker").get<bool>();
    p.albedo2 = vec3_from(pj.at("albedo2"));
    p.checker_cell = pj.at("checker_cell").get<double>();
    s.primitives.push_back(p);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::parse_error& e) {
    throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
  }
  return j;
}

std::string view_split(int view_idx) {
  if (view_idx % 8 == 7) return "test";
  if (view_idx % 8 == 3) return "val";
  return "train";
}

// Uniform over the upper hemisphere, looking at the scene center.
CameraPose hemisphere_pose(Rng& rng, double radius) {
  const double azimuth = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  // cos(elevation) uniform in (0.08, 0.95) keeps cameras off the pole and horizon
  const double z_frac = rng.uniform(0.08, 0.95);
  const double horiz = std::sqrt(1.0 - z_frac * z_frac);
  const Vec3 eye{radius * horiz * std::cos(azimuth), radius * z_frac,
                 radius * horiz * std::sin(azimuth)};
  return look_at(eye, {0, 0, 0});
}

}  // namespace

std::vector<int> Dataset::scene_indices(const std::string& split) const {
  std::vector<int> out;
  for (size_t i = 0; i < scenes.size(); ++i)
    if (split.empty() || scenes[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

std::vector<int> Dataset::view_indices(int scene, const std::string& split) const {
  std::vector<int> out;
  const auto& views = scenes.at(static_cast<size_t>(scene)).views;
  for (size_t i = 0; i < views.size(); ++i)
    if (split.empty() || views[i].split == split) out.push_back(static_cast<int>(i));
  return out;
}

std::string make_dataset(const MakeDatasetConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("make_dataset: out_dir is required");
  if (cfg.num_scenes < 1 || cfg.views_per_scene < 1)
    throw ConfigError("make_dataset: need at least one scene and one view");
  if (cfg.resolution < 16 || cfg.resolution % 16 != 0)
    throw ConfigError("make_dataset: resolution must be a positive multiple of 16");
  const fs::path root(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create '" + root.string() + "': " + ec.message());

  CameraIntrinsics intr;
  intr.width = intr.height = cfg.resolution;
  const double fov = cfg.fov_degrees * 3.14159265358979323846 / 180.0;
  intr.focal_x = intr.focal_y = 0.5 * cfg.resolution / std::tan(0.5 * fov);
  intr.principal_x = intr.principal_y = 0.5 * cfg.resolution;

  const int num_test =
      static_cast<int>(std::lround(cfg.num_scenes * cfg.test_scene_fraction + 1e-9));
  const int first_test = cfg.num_scenes - num_test;

  json manifest;
  manifest["background"] = vec3_json(cfg.background);
  manifest["scenes"] = json::array();

  for (int s = 0; s < cfg.num_scenes; ++s) {
    const Scene scene = generate_scene(cfg.seed + static_cast<uint64_t>(s), cfg.scene_template);
    char dirname[32];
    std::snprintf(dirname, sizeof dirname, "scene_%04d", s);
    const fs::path scene_dir = root / dirname;
    fs::create_directories(scene_dir, ec);
    if (ec) throw IoError("cannot create '" + scene_dir.string() + "': " + ec.message());

    json cameras;
    cameras["width"] = intr.width;
    cameras["height"] = intr.height;
    cameras["fx"] = intr.focal_x;
    cameras["fy"] = intr.focal_y;
    cameras["cx"] = intr.principal_x;
    cameras["cy"] = intr.principal_y;
    cameras["frames"] = json::array();

    Rng cam_rng = Rng::stream(cfg.seed, 0xca3e7a, static_cast<uint64_t>(s));
    json view_splits = json::array();
    for (int k = 0; k < cfg.views_per_scene; ++k) {
      const CameraPose pose = hemisphere_pose(cam_rng, cfg.camera_radius);
      char framename[32];
      std::snprintf(framename, sizeof framename, "frame_%03d.png", k);
      const Image img = raytrace_gt(scene, pose, intr, Lighting{}, cfg.background);
      write_png((scene_dir / framename).string(), img);
      cameras["frames"].push_back({{"file", framename}, {"transform", transform_json(pose)}});
      view_splits.push_back(view_split(k));
    }
    write_text(scene_dir / "cameras.json", cameras.dump(2));
    write_text(scene_dir / "scene.json", scene_params_json(scene).dump(2));

    manifest["scenes"].push_back({{"id", s},
                                  {"dir", dirname},
                                  {"split", s >= first_test ? "test" : "train"},
                                  {"views", view_splits}});
  }

  const fs::path manifest_path = root / "manifest.json";
  write_text(manifest_path, manifest.dump(2));
  return manifest_path.string();
}

Dataset load_dataset(const std::string& manifest_path) {
  const fs::path mpath(manifest_path);
  const json manifest = read_json(mpath);
  Dataset ds;
  ds.root = mpath.parent_path().string();
  if (manifest.contains("background")) ds.background = vec3_from(manifest.at("background"));
  if (!manifest.contains("scenes") || !manifest.at("scenes").is_array())
    throw IoError("manifest has no scene list");

  for (const json& sj : manifest.at("scenes")) {
    DatasetScene scene;
    scene.id = sj.at("id").get<int>();
    scene.dir = sj.at("dir").get<std::string>();
    scene.split = sj.at("split").get<std::string>();
    const fs::path scene_dir = fs::path(ds.root) / scene.dir;

    const json cameras = read_json(scene_dir / "cameras.json");
    CameraIntrinsics intr;
    intr.width = cameras.at("width").get<int>();
    intr.height = cameras.at("height").get<int>();
    intr.focal_x = cameras.at("fx").get<double>();
    intr.focal_y = cameras.at("fy").get<double>();
    intr.principal_x = cameras.at("cx").get<double>();
    intr.principal_y = cameras.at("cy").get<double>();
    intr.validate();

    const json& frames = cameras.at("frames");
    std::vector<std::string> splits;
    if (sj.contains("views")) {
      for (const json& v : sj.at("views")) splits.push_back(v.get<std::string>());
      if (splits.size() != frames.size())
        throw IoError("scene '" + scene.dir + "': split tags do not match frame count");
    }

    int k = 0;
    for (const json& fj : frames) {
      DatasetView view;
      view.file = fj.at("file").get<std::string>();
      view.pose = pose_from_transform(fj.at("transform"));
      view.intrinsics = intr;
      view.split = splits.empty() ? view_split(k) : splits[static_cast<size_t>(k)];
      view.image = read_png((scene_dir / view.file).string());
      if (view.image.width != intr.width || view.image.height != intr.height)
        throw IoError("image '" + view.file + "' does not match the camera size");
      scene.views.push_back(std::move(view));
      ++k;
    }

    if (fs::exists(scene_dir / "scene.json")) {
      scene.params = scene_params_from(read_json(scene_dir / "scene.json"));
      scene.has_params = true;
    }
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

}  // namespace grf
