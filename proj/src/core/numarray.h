#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/dtype.h"

namespace grf {

// Dense row-major numeric array. Training runs in f32; f64 exists for
// gradient checks, so the element type is a runtime property and kernels
// dispatch on it once per operation.
class NumArray {
public:
  NumArray() = default;
  NumArray(std::vector<int64_t> shape, Dtype dt);  // zero-filled

  static NumArray full(std::vector<int64_t> shape, Dtype dt, double value);
  static NumArray from_values(std::vector<int64_t> shape, Dtype dt, std::span<const double> values);
  static NumArray scalar(Dtype dt, double value) { return full({1}, dt, value); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t numel() const { return numel_; }
  Dtype dtype() const { return dtype_; }
  bool empty() const { return numel_ == 0; }

  // 2-D view of the shape: rows = extent 0, cols = product of the rest.
  int64_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  int64_t cols() const { return shape_.empty() ? 1 : numel_ / shape_[0]; }

  template <typename T> T* data();
  template <typename T> const T* data() const;

  // Element accessors for tests and I/O; hot paths use data<T>().
  double get(int64_t i) const;
  void set(int64_t i, double v);

  std::vector<double> to_vector() const;
  bool all_finite() const;
  NumArray astype(Dtype dt) const;
  NumArray clone() const { return *this; }

  void fill(double v);
  void add_inplace(const NumArray& other);  // shapes must match

private:
  std::vector<int64_t> shape_;
  int64_t numel_ = 0;
  Dtype dtype_ = Dtype::F32;
  std::vector<float> f32_;
  std::vector<double> f64_;
};

template <> inline float* NumArray::data<float>() { return f32_.data(); }
template <> inline double* NumArray::data<double>() { return f64_.data(); }
template <> inline const float* NumArray::data<float>() const { return f32_.data(); }
template <> inline const double* NumArray::data<double>() const { return f64_.data(); }

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace grf
