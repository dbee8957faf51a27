#include "core/numarray.h"

#include <cmath>
#include <sstream>

namespace grf {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

NumArray::NumArray(std::vector<int64_t> shape, Dtype dt)
    : shape_(std::move(shape)), numel_(shape_numel(shape_)), dtype_(dt) {
  if (dtype_ == Dtype::F32)
    f32_.assign(static_cast<size_t>(numel_), 0.0f);
  else
    f64_.assign(static_cast<size_t>(numel_), 0.0);
}

NumArray NumArray::full(std::vector<int64_t> shape, Dtype dt, double value) {
  NumArray a(std::move(shape), dt);
  a.fill(value);
  return a;
}

NumArray NumArray::from_values(std::vector<int64_t> shape, Dtype dt, std::span<const double> values) {
  NumArray a(std::move(shape), dt);
  if (static_cast<int64_t>(values.size()) != a.numel_)
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(a.shape_));
  for (int64_t i = 0; i < a.numel_; ++i) a.set(i, values[static_cast<size_t>(i)]);
  return a;
}

double NumArray::get(int64_t i) const {
  return dtype_ == Dtype::F32 ? static_cast<double>(f32_[static_cast<size_t>(i)])
                              : f64_[static_cast<size_t>(i)];
}

void NumArray::set(int64_t i, double v) {
  if (dtype_ == Dtype::F32)
    f32_[static_cast<size_t>(i)] = static_cast<float>(v);
  else
    f64_[static_cast<size_t>(i)] = v;
}

std::vector<double> NumArray::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel_));
  for (int64_t i = 0; i < numel_; ++i) out[static_cast<size_t>(i)] = get(i);
  return out;
}

bool NumArray::all_finite() const {
  if (dtype_ == Dtype::F32) {
    for (float v : f32_)
      if (!std::isfinite(v)) return false;
  } else {
    for (double v : f64_)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

NumArray NumArray::astype(Dtype dt) const {
  if (dt == dtype_) return *this;
  NumArray out(shape_, dt);
  for (int64_t i = 0; i < numel_; ++i) out.set(i, get(i));
  return out;
}

void NumArray::fill(double v) {
  if (dtype_ == Dtype::F32)
    f32_.assign(f32_.size(), static_cast<float>(v));
  else
    f64_.assign(f64_.size(), v);
}

void NumArray::add_inplace(const NumArray& other) {
  if (other.dtype_ != dtype_ || other.numel_ != numel_)
    throw ShapeError("add_inplace: mismatched operands " + shape_str(shape_) + " vs " +
                     shape_str(other.shape_));
  if (dtype_ == Dtype::F32) {
    const float* src = other.data<float>();
    float* dst = f32_.data();
    for (int64_t i = 0; i < numel_; ++i) dst[i] += src[i];
  } else {
    const double* src = other.data<double>();
    double* dst = f64_.data();
    for (int64_t i = 0; i < numel_; ++i) dst[i] += src[i];
  }
}

}  // namespace grf
