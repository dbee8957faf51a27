#pragma once

#include <string>
#include <vector>

#include "core/numarray.h"
#include "scene/procgen.h"

namespace grf {

struct FeatnetConfig {
  std::vector<int> encoder_channels{16, 32, 64, 128};  // stride-2 convs
  int first_kernel = 7;                                // remaining encoder convs are 3x3
  bool use_bottleneck = true;                          // global conv + flatten/tile path
  int bottleneck_channels = 32;
  int output_channels = 32;      // per-pixel feature width C
  int viewpoint_frequencies = 5; // camera-center embedding L
  bool stack_rotation = false;   // optional quaternion stacking
  int rotation_frequencies = 4;

  int downsample_factor() const { return 1 << encoder_channels.size(); }
  int input_channels() const {
    return 3 + 2 * viewpoint_frequencies * 3 + (stack_rotation ? 2 * rotation_frequencies * 4 : 0);
  }
};

enum class AggregatorKind { AttSets, MaxPool };

struct AggregationConfig {
  AggregatorKind kind = AggregatorKind::AttSets;
  int position_aware_width = 128;                // two shared fc layers
  std::vector<int> fc_widths{128, 128, 128, 256, 256};
  int output_width = 128;
  int point_frequencies = 10;  // query-point embedding L
  int dir_frequencies = 4;     // ray-direction embedding L
};

struct HeadConfig {
  int width = 128;
  int depth = 4;
  int skip_at = 2;  // layer index whose input re-concatenates the features
  int dir_frequencies = 4;
};

struct SamplingConfig {
  int n_coarse = 32;
  int n_fine = 64;
};

struct ModelConfig {
  Dtype dtype = Dtype::F32;
  FeatnetConfig featnet;
  AggregationConfig aggregation;
  HeadConfig head;
  SamplingConfig sampling;
  Aabb bounds;
  // Camera centers are normalized by bounds scaled up by this factor so
  // orbiting viewpoints still land inside [-1,1] for the embedding.
  double viewpoint_bounds_scale = 4.0;
  Vec3 background{0, 0, 0};
  int max_views = 10;
  uint64_t init_seed = 1;
};

// Named presets: "mini" (gradient checks), "desk" (CI-sized training),
// "desk-wide" (desk data at wider layers), "paper" (paper-scale layers).
ModelConfig model_preset(const std::string& name);

}  // namespace grf
