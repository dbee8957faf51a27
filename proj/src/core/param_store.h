#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/numarray.h"
#include "core/rng.h"

namespace grf {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// All learnable weights, their gradient slots, and Adam state. Parameter
// values are held behind shared_ptr so tapes can alias them without copies;
// updates happen only between forward/backward passes.
class ParamStore {
public:
  explicit ParamStore(Dtype dt) : dtype_(dt) {}

  Dtype dtype() const { return dtype_; }

  // Creation (fixed iteration order = lexicographic by name).
  void create(const std::string& name, std::vector<int64_t> shape, double init_value = 0.0);
  void create_random(const std::string& name, std::vector<int64_t> shape, Rng& rng, double stddev);
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  std::shared_ptr<const NumArray> value_ptr(const std::string& name) const;
  const NumArray& value(const std::string& name) const { return *value_ptr(name); }
  NumArray& mutable_value(const std::string& name);

  void accumulate_grad(const std::string& name, const NumArray& g);
  bool has_grad(const std::string& name) const;
  const NumArray& grad(const std::string& name) const;
  void zero_grads();

  // One Adam step with bias correction; requires a gradient for every
  // parameter, increments the step counter, then clears gradients.
  void adam_step(const AdamHyper& hyper);

  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }

  std::vector<std::string> names() const;
  int64_t total_parameters() const;

  // Checkpoint I/O (values, Adam moments, step counter, plus an opaque
  // metadata blob the pipeline uses to store its config).
  void save(const std::string& path, const std::string& metadata) const;
  static ParamStore load(const std::string& path, std::string* metadata_out);

  ParamStore astype(Dtype dt) const;

private:
  struct Entry {
    std::shared_ptr<NumArray> value;
    std::optional<NumArray> grad;
    NumArray adam_m;
    NumArray adam_v;
  };

  Dtype dtype_;
  std::map<std::string, Entry> params_;
  int64_t step_ = 0;
};

}  // namespace grf
