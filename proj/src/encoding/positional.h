#pragma once

#include <span>
#include <vector>

#include "core/dtype.h"

namespace grf {

// Sinusoidal positional encoding. Inputs are expected pre-scaled into [-1,1]
// (scene bounds handle positions; directions and colors already fit).
struct EncodingSpec {
  int num_frequencies = 1;  // L
  bool include_raw_input = false;

  int output_dim(int input_dim) const {
    return (2 * num_frequencies + (include_raw_input ? 1 : 0)) * input_dim;
  }
};

// concat over dims i, frequencies k in [0,L): (sin(2^k pi x_i), cos(2^k pi x_i)),
// frequency-major within each dim; raw x_i prepended per-dim when enabled.
std::vector<double> positional_encode(std::span<const double> x, const EncodingSpec& spec);

}  // namespace grf
