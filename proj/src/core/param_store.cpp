#include "core/param_store.h"

#include <cmath>
#include <cstring>
#include <fstream>

namespace grf {

namespace {
constexpr char kMagic[8] = {'G', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_str(std::istream& is) {
  const uint64_t n = read_u64(is);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}
void write_array(std::ostream& os, const NumArray& a) {
  write_u64(os, a.shape().size());
  for (int64_t e : a.shape()) write_u64(os, static_cast<uint64_t>(e));
  for (int64_t i = 0; i < a.numel(); ++i) write_f64(os, a.get(i));
}
NumArray read_array(std::istream& is, Dtype dt) {
  const uint64_t ndim = read_u64(is);
  std::vector<int64_t> shape(ndim);
  for (auto& e : shape) e = static_cast<int64_t>(read_u64(is));
  NumArray a(shape, dt);
  for (int64_t i = 0; i < a.numel(); ++i) a.set(i, read_f64(is));
  return a;
}
}  // namespace

void ParamStore::create(const std::string& name, std::vector<int64_t> shape, double init_value) {
  if (params_.count(name)) throw Error("parameter '" + name + "' already exists");
  Entry e;
  e.value = std::make_shared<NumArray>(NumArray::full(shape, dtype_, init_value));
  e.adam_m = NumArray(shape, dtype_);
  e.adam_v = NumArray(shape, dtype_);
  params_.emplace(name, std::move(e));
}

void ParamStore::create_random(const std::string& name, std::vector<int64_t> shape, Rng& rng,
                               double stddev) {
  create(name, shape);
  NumArray& v = *params_.at(name).value;
  for (int64_t i = 0; i < v.numel(); ++i) v.set(i, rng.normal() * stddev);
}

std::shared_ptr<const NumArray> ParamStore::value_ptr(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return it->second.value;
}

NumArray& ParamStore::mutable_value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
  return *it->second.value;
}

void ParamStore::accumulate_grad(const std::string& name, const NumArray& g) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("gradient for unknown parameter '" + name + "'");
  if (g.shape() != it->second.value->shape())
    throw ShapeError("gradient shape mismatch for '" + name + "'");
  if (!it->second.grad) it->second.grad = NumArray(g.shape(), dtype_);
  it->second.grad->add_inplace(g.dtype() == dtype_ ? g : g.astype(dtype_));
}

bool ParamStore::has_grad(const std::string& name) const {
  auto it = params_.find(name);
  return it != params_.end() && it->second.grad.has_value();
}

const NumArray& ParamStore::grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end() || !it->second.grad)
    throw Error("no gradient recorded for '" + name + "'");
  return *it->second.grad;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : params_) e.grad.reset();
}

void ParamStore::adam_step(const AdamHyper& hyper) {
  for (const auto& [name, e] : params_) {
    if (!e.grad) throw Error("adam_step: missing gradient for '" + name + "'");
  }
  step_ += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step_));
  for (auto& [name, e] : params_) {
    NumArray& p = *e.value;
    const NumArray& g = *e.grad;
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = g.get(i);
      const double m = hyper.beta1 * e.adam_m.get(i) + (1.0 - hyper.beta1) * gi;
      const double v = hyper.beta2 * e.adam_v.get(i) + (1.0 - hyper.beta2) * gi * gi;
      e.adam_m.set(i, m);
      e.adam_v.set(i, v);
      const double update = hyper.learning_rate * (m / bc1) / (std::sqrt(v / bc2) + hyper.epsilon);
      p.set(i, p.get(i) - update);
    }
  }
  zero_grads();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, e] : params_) out.push_back(name);
  return out;
}

int64_t ParamStore::total_parameters() const {
  int64_t n = 0;
  for (const auto& [name, e] : params_) n += e.value->numel();
  return n;
}

void ParamStore::save(const std::string& path, const std::string& metadata) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  write_u64(os, static_cast<uint64_t>(step_));
  write_str(os, metadata);
  write_u64(os, params_.size());
  for (const auto& [name, e] : params_) {
    write_str(os, name);
    write_array(os, *e.value);
    write_array(os, e.adam_m);
    write_array(os, e.adam_v);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path, std::string* metadata_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("'" + path + "' is not a checkpoint file");
  ParamStore store(Dtype::F32);
  store.step_ = static_cast<int64_t>(read_u64(is));
  const std::string metadata = read_str(is);
  if (metadata_out) *metadata_out = metadata;
  const uint64_t count = read_u64(is);
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_str(is);
    Entry e;
    e.value = std::make_shared<NumArray>(read_array(is, store.dtype_));
    e.adam_m = read_array(is, store.dtype_);
    e.adam_v = read_array(is, store.dtype_);
    store.params_.emplace(name, std::move(e));
  }
  if (!is) throw IoError("truncated checkpoint '" + path + "'");
  return store;
}

ParamStore ParamStore::astype(Dtype dt) const {
  ParamStore out(dt);
  out.step_ = step_;
  for (const auto& [name, e] : params_) {
    Entry ne;
    ne.value = std::make_shared<NumArray>(e.value->astype(dt));
    ne.adam_m = e.adam_m.astype(dt);
    ne.adam_v = e.adam_v.astype(dt);
    out.params_.emplace(name, std::move(ne));
  }
  return out;
}

}  // namespace grf
