#pragma once

#include <string>
#include <vector>

#include "scene/procgen.h"

namespace grf {

// On-disk layout:
//   out_dir/manifest.json                 scenes + split tags
//   out_dir/scene_<id>/cameras.json       {width,height,fx,fy,cx,cy,frames:[{file,transform}]}
//   out_dir/scene_<id>/frame_<k>.png
//   out_dir/scene_<id>/scene.json         generator parameters (oracle metadata)
// transform is the 4x4 camera-to-world matrix, 16 numbers row-major.

struct MakeDatasetConfig {
  int num_scenes = 1;
  int views_per_scene = 16;
  int resolution = 64;
  uint64_t seed = 1;
  std::string out_dir;
  SceneTemplate scene_template = SceneTemplate::Random;
  Vec3 background{0, 0, 0};
  double camera_radius = 3.2;
  double fov_degrees = 65.0;
  double test_scene_fraction = 0.2;  // trailing scenes become test scenes
};

struct DatasetView {
  std::string file;  // relative to the scene directory
  CameraPose pose;
  CameraIntrinsics intrinsics;
  std::string split;  // train | val | test
  Image image;        // filled by load_dataset
};

struct DatasetScene {
  int id = 0;
  std::string dir;    // relative to the dataset root
  std::string split;  // train | test
  std::vector<DatasetView> views;
  bool has_params = false;
  Scene params;  // generator metadata when present
};

struct Dataset {
  std::string root;
  Vec3 background{0, 0, 0};
  std::vector<DatasetScene> scenes;

  std::vector<int> scene_indices(const std::string& split) const;
  std::vector<int> view_indices(int scene, const std::string& split) const;
};

// Renders every view with the ground-truth tracer and writes the layout
// above. Pure function of the config; identical configs produce
// byte-identical files. Returns the manifest path.
std::string make_dataset(const MakeDatasetConfig& cfg);

// Loads images as [0,1] floats, parses cameras, validates rigid transforms.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace grf
