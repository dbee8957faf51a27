#pragma once

#include <map>
#include <memory>
#include <mutex>

#include "core/param_store.h"
#include "core/tape.h"
#include "geometry/camera.h"
#include "io/image.h"
#include "pipeline/model_config.h"

namespace grf {

// Stacks the embedded camera viewpoint onto every pixel of an image.
// Output rows are H*W pixel vectors: [rgb | enc(center) | enc(quat)?].
// Centers are normalized by the scaled scene bounds; values that still fall
// outside [-1,1] are clamped with a warning to stderr.
NumArray stack_viewpoint(const Image& image, const Vec3& camera_center, const Mat3* rotation,
                         const ModelConfig& cfg);

// Encoder/decoder CNN with skip connections producing one feature vector per
// pixel. Encoder: stride-2 convs; global bottleneck conv flattened and tiled
// back; decoder: nearest-neighbor upsample + 3x3 conv with skip concats. All
// views share one parameter set under the "featnet/" prefix.
class ConvStack {
public:
  explicit ConvStack(const FeatnetConfig& cfg) : cfg_(cfg) {}

  const FeatnetConfig& config() const { return cfg_; }

  void create_params(ParamStore& store, Rng& rng) const;

  // stacked: [H*W, input_channels()]; returns [H*W, output_channels].
  NodeId extract(Tape& tape, NodeId stacked, int height, int width,
                 const ParamStore& store) const;

private:
  struct Plan {
    std::shared_ptr<const std::vector<int64_t>> indices;
    int64_t taps = 1;
    int out_h = 0, out_w = 0;
  };
  Plan conv_plan(int h, int w, int kernel, int stride, int pad) const;
  Plan upsample_plan(int h, int w) const;

  FeatnetConfig cfg_;
  mutable std::mutex plan_mutex_;
  mutable std::map<uint64_t, Plan> plan_cache_;
};

}  // namespace grf
