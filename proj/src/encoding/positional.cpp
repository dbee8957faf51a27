#include "encoding/positional.h"

#include <cmath>

namespace grf {

std::vector<double> positional_encode(std::span<const double> x, const EncodingSpec& spec) {
  if (spec.num_frequencies < 1) throw ConfigError("positional_encode: L must be >= 1");
  constexpr double kPi = 3.14159265358979323846;
  std::vector<double> out;
  out.reserve(static_cast<size_t>(spec.output_dim(static_cast<int>(x.size()))));
  for (double xi : x) {
    if (!std::isfinite(xi)) throw NumericError("positional_encode: non-finite input");
    if (spec.include_raw_input) out.push_back(xi);
    double freq = kPi;
    for (int k = 0; k < spec.num_frequencies; ++k) {
      out.push_back(std::sin(freq * xi));
      out.push_back(std::cos(freq * xi));
      freq *= 2.0;
    }
  }
  return out;
}

}  // namespace grf
