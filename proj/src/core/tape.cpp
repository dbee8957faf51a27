#include "core/tape.h"

#include <cblas.h>

#include <algorithm>
#include <cmath>

#include "core/param_store.h"

namespace grf {

namespace {

// Run f with the element type matching dt.
template <class F>
void dispatch(Dtype dt, F&& f) {
  if (dt == Dtype::F32)
    f(float{});
  else
    f(double{});
}

void gemm(Dtype dt, bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, const NumArray& a,
          const NumArray& b, NumArray& c, double beta) {
  // c[m,n] (+)= opA(a) * opB(b), row-major.
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const int lda = static_cast<int>(trans_a ? m : k);
  const int ldb = static_cast<int>(trans_b ? k : n);
  if (dt == Dtype::F32) {
    cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0f, a.data<float>(), lda, b.data<float>(), ldb,
                static_cast<float>(beta), c.data<float>(), static_cast<int>(n));
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), 1.0, a.data<double>(), lda, b.data<double>(), ldb, beta,
                c.data<double>(), static_cast<int>(n));
  }
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  // log(1 + e^x) without overflow.
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

Tape::Tape(Dtype dt, bool check_finite) : dtype_(dt), check_finite_(check_finite) {}

NodeId Tape::push(std::shared_ptr<const NumArray> value, bool needs_grad, std::function<void()> bw) {
  if (value->dtype() != dtype_) throw ShapeError("tape: node dtype differs from tape dtype");
  if (check_finite_ && !value->all_finite())
    throw NumericError("tape: non-finite values produced at node " +
                       std::to_string(nodes_.size()));
  nodes_.push_back(Node{std::move(value), NumArray{}, needs_grad, {}, std::move(bw)});
  return static_cast<NodeId>(nodes_.size() - 1);
}

NumArray& Tape::grad_buf(NodeId id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.empty()) n.grad = NumArray(n.value->shape(), dtype_);
  return n.grad;
}

const NumArray& Tape::grad(NodeId id) {
  return grad_buf(id);
}

void Tape::check_same_shape(NodeId a, NodeId b, const char* op) const {
  if (val(a).shape() != val(b).shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(val(a).shape()) + " vs " +
                     shape_str(val(b).shape()));
}

NodeId Tape::constant(NumArray v) {
  return push(std::move(v), false, {});
}

NodeId Tape::constant(std::shared_ptr<const NumArray> v) {
  return push(std::move(v), false, {});
}

NodeId Tape::input(NumArray v) {
  return push(std::move(v), true, {});
}

NodeId Tape::param(const ParamStore& store, const std::string& name) {
  std::shared_ptr<const NumArray> v = store.value_ptr(name);
  if (v->dtype() != dtype_) throw ShapeError("param '" + name + "' dtype differs from tape");
  NodeId id = push(std::move(v), true, {});
  nodes_[static_cast<size_t>(id)].param_name = name;
  return id;
}

// ---------------------------------------------------------------------------
// Elementwise ops

NodeId Tape::add(NodeId a, NodeId b) {
  check_same_shape(a, b, "add");
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    const T* pb = val(b).data<T>();
    T* po = out.data<T>();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  });
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, b, id] {
      const NumArray& g = grad_buf(id);
      if (needs_grad(a)) grad_buf(a).add_inplace(g);
      if (needs_grad(b)) grad_buf(b).add_inplace(g);
    };
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_same_shape(a, b, "sub");
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    const T* pb = val(b).data<T>();
    T* po = out.data<T>();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  });
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, b, id] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        if (needs_grad(a)) {
          T* pa = grad_buf(a).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) pa[i] += pg[i];
        }
        if (needs_grad(b)) {
          T* pb = grad_buf(b).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) pb[i] -= pg[i];
        }
      });
    };
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_same_shape(a, b, "mul");
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    const T* pb = val(b).data<T>();
    T* po = out.data<T>();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  });
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, b, id] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        if (needs_grad(a)) {
          T* ga = grad_buf(a).data<T>();
          const T* pb = val(b).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] * pb[i];
        }
        if (needs_grad(b)) {
          T* gb = grad_buf(b).data<T>();
          const T* pa = val(a).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) gb[i] += pg[i] * pa[i];
        }
      });
    };
  return id;
}

NodeId Tape::div(NodeId a, NodeId b) {
  check_same_shape(a, b, "div");
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    const T* pb = val(b).data<T>();
    T* po = out.data<T>();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] / pb[i];
  });
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, b, id] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        const T* pb = val(b).data<T>();
        const T* py = val(id).data<T>();
        if (needs_grad(a)) {
          T* ga = grad_buf(a).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] / pb[i];
        }
        if (needs_grad(b)) {
          T* gb = grad_buf(b).data<T>();
          for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= pg[i] * py[i] / pb[i];
        }
      });
    };
  return id;
}

NodeId Tape::scale(NodeId a, double s) {
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const T ts = static_cast<T>(s);
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * ts;
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, s] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        const T ts = static_cast<T>(s);
        for (int64_t i = 0; i < g.numel(); ++i) ga[i] += pg[i] * ts;
      });
    };
  return id;
}

NodeId Tape::add_scalar(NodeId a, double c) {
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const T tc = static_cast<T>(c);
    for (int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + tc;
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id] {
      grad_buf(a).add_inplace(grad_buf(id));
    };
  return id;
}

namespace {
enum UnaryKind { kExp, kSin, kCos, kRelu, kSigmoid, kSoftplus };
}

NodeId Tape::unary_map(NodeId a, int kind) {
  NumArray out(val(a).shape(), dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const int64_t n = out.numel();
    switch (kind) {
      case kExp:
        for (int64_t i = 0; i < n; ++i) po[i] = std::exp(pa[i]);
        break;
      case kSin:
        for (int64_t i = 0; i < n; ++i) po[i] = std::sin(pa[i]);
        break;
      case kCos:
        for (int64_t i = 0; i < n; ++i) po[i] = std::cos(pa[i]);
        break;
      case kRelu:
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
        break;
      case kSigmoid:
        for (int64_t i = 0; i < n; ++i) po[i] = stable_sigmoid(pa[i]);
        break;
      case kSoftplus:
        for (int64_t i = 0; i < n; ++i) po[i] = stable_softplus(pa[i]);
        break;
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, kind] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        const T* px = val(a).data<T>();
        const T* py = val(id).data<T>();
        T* ga = grad_buf(a).data<T>();
        const int64_t n = g.numel();
        switch (kind) {
          case kExp:
            for (int64_t i = 0; i < n; ++i) ga[i] += pg[i] * py[i];
            break;
          case kSin:
            for (int64_t i = 0; i < n; ++i) ga[i] += pg[i] * std::cos(px[i]);
            break;
          case kCos:
            for (int64_t i = 0; i < n; ++i) ga[i] -= pg[i] * std::sin(px[i]);
            break;
          case kRelu:
            for (int64_t i = 0; i < n; ++i) ga[i] += py[i] > T(0) ? pg[i] : T(0);
            break;
          case kSigmoid:
            for (int64_t i = 0; i < n; ++i) ga[i] += pg[i] * py[i] * (T(1) - py[i]);
            break;
          case kSoftplus:
            // softplus'(x) = sigmoid(x) = 1 - exp(-y)
            for (int64_t i = 0; i < n; ++i) ga[i] += pg[i] * (T(1) - std::exp(-py[i]));
            break;
        }
      });
    };
  return id;
}

NodeId Tape::exp(NodeId a) { return unary_map(a, kExp); }
NodeId Tape::sin(NodeId a) { return unary_map(a, kSin); }
NodeId Tape::cos(NodeId a) { return unary_map(a, kCos); }
NodeId Tape::relu(NodeId a) { return unary_map(a, kRelu); }
NodeId Tape::sigmoid(NodeId a) { return unary_map(a, kSigmoid); }
NodeId Tape::softplus(NodeId a) { return unary_map(a, kSoftplus); }

// ---------------------------------------------------------------------------
// Data movement

NodeId Tape::concat_cols(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  const int64_t rows = val(parts[0]).rows();
  int64_t cols = 0;
  for (NodeId p : parts) {
    if (val(p).rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += val(p).cols();
  }
  NumArray out({rows, cols}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    T* po = out.data<T>();
    int64_t off = 0;
    for (NodeId p : parts) {
      const int64_t pc = val(p).cols();
      const T* pp = val(p).data<T>();
      for (int64_t r = 0; r < rows; ++r)
        std::copy(pp + r * pc, pp + (r + 1) * pc, po + r * cols + off);
      off += pc;
    }
  });
  bool ng = false;
  for (NodeId p : parts) ng = ng || needs_grad(p);
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    std::vector<NodeId> ps(parts.begin(), parts.end());
    nodes_[static_cast<size_t>(id)].backward = [this, ps, id, rows, cols] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        int64_t off = 0;
        for (NodeId p : ps) {
          const int64_t pc = val(p).cols();
          if (needs_grad(p)) {
            T* gp = grad_buf(p).data<T>();
            for (int64_t r = 0; r < rows; ++r) {
              const T* src = pg + r * cols + off;
              T* dst = gp + r * pc;
              for (int64_t c = 0; c < pc; ++c) dst[c] += src[c];
            }
          }
          off += pc;
        }
      });
    };
  }
  return id;
}

NodeId Tape::concat_rows(std::span<const NodeId> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input");
  const int64_t cols = val(parts[0]).cols();
  int64_t rows = 0;
  for (NodeId p : parts) {
    if (val(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += val(p).rows();
  }
  NumArray out({rows, cols}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    T* po = out.data<T>();
    for (NodeId p : parts) {
      const T* pp = val(p).data<T>();
      po = std::copy(pp, pp + val(p).numel(), po);
    }
  });
  bool ng = false;
  for (NodeId p : parts) ng = ng || needs_grad(p);
  NodeId id = push(std::move(out), ng, {});
  if (ng) {
    std::vector<NodeId> ps(parts.begin(), parts.end());
    nodes_[static_cast<size_t>(id)].backward = [this, ps, id] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        for (NodeId p : ps) {
          const int64_t n = val(p).numel();
          if (needs_grad(p)) {
            T* gp = grad_buf(p).data<T>();
            for (int64_t i = 0; i < n; ++i) gp[i] += pg[i];
          }
          pg += n;
        }
      });
    };
  }
  return id;
}

NodeId Tape::gather_rows(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx, int64_t taps) {
  const int64_t k = val(a).cols();
  const int64_t src_rows = val(a).rows();
  if (taps < 1 || static_cast<int64_t>(idx->size()) % taps != 0)
    throw ShapeError("gather_rows: bad tap count");
  const int64_t out_rows = static_cast<int64_t>(idx->size()) / taps;
  NumArray out({out_rows, taps * k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const int64_t* pi = idx->data();
    for (int64_t r = 0; r < out_rows; ++r) {
      for (int64_t t = 0; t < taps; ++t) {
        const int64_t src = pi[r * taps + t];
        T* dst = po + r * taps * k + t * k;
        if (src < 0) {
          std::fill(dst, dst + k, T(0));
        } else {
          if (src >= src_rows) throw ShapeError("gather_rows: index out of range");
          std::copy(pa + src * k, pa + (src + 1) * k, dst);
        }
      }
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, idx, taps, k, out_rows] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        const int64_t* pi = idx->data();
        for (int64_t r = 0; r < out_rows; ++r) {
          for (int64_t t = 0; t < taps; ++t) {
            const int64_t src = pi[r * taps + t];
            if (src < 0) continue;
            const T* srcg = pg + r * taps * k + t * k;
            T* dst = ga + src * k;
            for (int64_t c = 0; c < k; ++c) dst[c] += srcg[c];
          }
        }
      });
    };
  return id;
}

// ---------------------------------------------------------------------------
// Linear algebra

NodeId Tape::matmul(NodeId a, NodeId b) {
  const int64_t n = val(a).rows(), k = val(a).cols();
  const int64_t k2 = val(b).rows(), m = val(b).cols();
  if (k != k2)
    throw ShapeError("matmul: inner extents differ " + shape_str(val(a).shape()) + " x " +
                     shape_str(val(b).shape()));
  NumArray out({n, m}, dtype_);
  gemm(dtype_, false, false, n, m, k, val(a), val(b), out, 0.0);
  const bool ng = needs_grad(a) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, b, id, n, m, k] {
      const NumArray& g = grad_buf(id);
      if (needs_grad(a)) gemm(dtype_, false, true, n, k, m, g, val(b), grad_buf(a), 1.0);
      if (needs_grad(b)) gemm(dtype_, true, false, k, m, n, val(a), g, grad_buf(b), 1.0);
    };
  return id;
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId b, Act act) {
  const int64_t n = val(x).rows(), k = val(x).cols();
  const int64_t k2 = val(w).rows(), m = val(w).cols();
  if (k != k2) throw ShapeError("linear: input cols != weight rows");
  if (val(b).numel() != m) throw ShapeError("linear: bias length != output cols");
  NumArray out({n, m}, dtype_);
  gemm(dtype_, false, false, n, m, k, val(x), val(w), out, 0.0);
  dispatch(dtype_, [&]<class T>(T) {
    T* po = out.data<T>();
    const T* pb = val(b).data<T>();
    for (int64_t r = 0; r < n; ++r) {
      T* row = po + r * m;
      for (int64_t c = 0; c < m; ++c) {
        T v = row[c] + pb[c];
        switch (act) {
          case Act::None: break;
          case Act::Relu: v = v > T(0) ? v : T(0); break;
          case Act::Sigmoid: v = stable_sigmoid(v); break;
          case Act::Softplus: v = stable_softplus(v); break;
        }
        row[c] = v;
      }
    }
  });
  const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, x, w, b, id, n, m, k, act] {
      // d_pre = g * act'(y), derivable from the post-activation output.
      NumArray dpre({n, m}, dtype_);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = grad_buf(id).data<T>();
        const T* py = val(id).data<T>();
        T* pd = dpre.data<T>();
        const int64_t total = n * m;
        switch (act) {
          case Act::None:
            std::copy(pg, pg + total, pd);
            break;
          case Act::Relu:
            for (int64_t i = 0; i < total; ++i) pd[i] = py[i] > T(0) ? pg[i] : T(0);
            break;
          case Act::Sigmoid:
            for (int64_t i = 0; i < total; ++i) pd[i] = pg[i] * py[i] * (T(1) - py[i]);
            break;
          case Act::Softplus:
            for (int64_t i = 0; i < total; ++i) pd[i] = pg[i] * (T(1) - std::exp(-py[i]));
            break;
        }
      });
      if (needs_grad(x)) gemm(dtype_, false, true, n, k, m, dpre, val(w), grad_buf(x), 1.0);
      if (needs_grad(w)) gemm(dtype_, true, false, k, m, n, val(x), dpre, grad_buf(w), 1.0);
      if (needs_grad(b)) {
        dispatch(dtype_, [&]<class T>(T) {
          const T* pd = dpre.data<T>();
          T* gb = grad_buf(b).data<T>();
          for (int64_t r = 0; r < n; ++r)
            for (int64_t c = 0; c < m; ++c) gb[c] += pd[r * m + c];
        });
      }
    };
  return id;
}

// ---------------------------------------------------------------------------
// Reductions / structured ops

NodeId Tape::sum_all(NodeId a) {
  NumArray out({1}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    double acc = 0;
    for (int64_t i = 0; i < val(a).numel(); ++i) acc += static_cast<double>(pa[i]);
    out.set(0, acc);
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id] {
      const double g = grad_buf(id).get(0);
      dispatch(dtype_, [&]<class T>(T) {
        T* ga = grad_buf(a).data<T>();
        const T tg = static_cast<T>(g);
        for (int64_t i = 0; i < grad_buf(a).numel(); ++i) ga[i] += tg;
      });
    };
  return id;
}

NodeId Tape::set_sum(NodeId a, int64_t m) {
  const int64_t total = val(a).rows();
  if (m < 1 || total % m != 0) throw ShapeError("set_sum: rows not divisible by set size");
  const int64_t n = total / m, k = val(a).cols();
  NumArray out({n, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const int64_t block = n * k;
    std::copy(pa, pa + block, po);
    for (int64_t s = 1; s < m; ++s) {
      const T* src = pa + s * block;
      for (int64_t i = 0; i < block; ++i) po[i] += src[i];
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, m, n, k] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        const int64_t block = n * k;
        for (int64_t s = 0; s < m; ++s) {
          T* dst = ga + s * block;
          for (int64_t i = 0; i < block; ++i) dst[i] += pg[i];
        }
      });
    };
  return id;
}

NodeId Tape::set_max(NodeId a, int64_t m) {
  const int64_t total = val(a).rows();
  if (m < 1 || total % m != 0) throw ShapeError("set_max: rows not divisible by set size");
  const int64_t n = total / m, k = val(a).cols();
  NumArray out({n, k}, dtype_);
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n * k), 0);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    int32_t* pm = arg->data();
    const int64_t block = n * k;
    std::copy(pa, pa + block, po);
    for (int64_t s = 1; s < m; ++s) {
      const T* src = pa + s * block;
      for (int64_t i = 0; i < block; ++i)
        if (src[i] > po[i]) {
          po[i] = src[i];
          pm[i] = static_cast<int32_t>(s);
        }
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, arg, n, k] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        const int32_t* pm = arg->data();
        const int64_t block = n * k;
        for (int64_t i = 0; i < block; ++i) ga[pm[i] * block + i] += pg[i];
      });
    };
  return id;
}

NodeId Tape::set_broadcast(NodeId a, int64_t m) {
  const int64_t n = val(a).rows(), k = val(a).cols();
  NumArray out({m * n, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    const int64_t block = n * k;
    for (int64_t s = 0; s < m; ++s) std::copy(pa, pa + block, po + s * block);
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, m, n, k] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        const int64_t block = n * k;
        for (int64_t s = 0; s < m; ++s) {
          const T* src = pg + s * block;
          for (int64_t i = 0; i < block; ++i) ga[i] += src[i];
        }
      });
    };
  return id;
}

NodeId Tape::set_softmax(NodeId a, int64_t m) {
  const int64_t total = val(a).rows();
  if (m < 1 || total % m != 0) throw ShapeError("set_softmax: rows not divisible by set size");
  const int64_t n = total / m, k = val(a).cols();
  const int64_t block = n * k;
  NumArray out({total, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    // Stabilized per (row, channel) across the stack; the max shift has zero
    // net effect on the softmax derivative.
    std::vector<T> mx(pa, pa + block);
    for (int64_t s = 1; s < m; ++s) {
      const T* src = pa + s * block;
      for (int64_t i = 0; i < block; ++i) mx[i] = std::max(mx[i], src[i]);
    }
    std::vector<T> denom(static_cast<size_t>(block), T(0));
    for (int64_t s = 0; s < m; ++s) {
      const T* src = pa + s * block;
      T* dst = po + s * block;
      for (int64_t i = 0; i < block; ++i) {
        dst[i] = std::exp(src[i] - mx[i]);
        denom[i] += dst[i];
      }
    }
    for (int64_t s = 0; s < m; ++s) {
      T* dst = po + s * block;
      for (int64_t i = 0; i < block; ++i) dst[i] /= denom[i];
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, m, block] {
      // dA_s = Y_s * (g_s - sum_t Y_t*g_t)
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        const T* py = val(id).data<T>();
        T* ga = grad_buf(a).data<T>();
        std::vector<T> dot(static_cast<size_t>(block), T(0));
        for (int64_t s = 0; s < m; ++s) {
          const T* ys = py + s * block;
          const T* gs = pg + s * block;
          for (int64_t i = 0; i < block; ++i) dot[i] += ys[i] * gs[i];
        }
        for (int64_t s = 0; s < m; ++s) {
          const T* ys = py + s * block;
          const T* gs = pg + s * block;
          T* das = ga + s * block;
          for (int64_t i = 0; i < block; ++i) das[i] += ys[i] * (gs[i] - dot[i]);
        }
      });
    };
  return id;
}

NodeId Tape::mul_rows(NodeId a, NodeId s) {
  const int64_t n = val(a).rows(), k = val(a).cols();
  if (val(s).rows() != n || val(s).cols() != 1)
    throw ShapeError("mul_rows: scale must be [rows,1]");
  NumArray out({n, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    const T* ps = val(s).data<T>();
    T* po = out.data<T>();
    for (int64_t r = 0; r < n; ++r) {
      const T w = ps[r];
      for (int64_t c = 0; c < k; ++c) po[r * k + c] = pa[r * k + c] * w;
    }
  });
  const bool ng = needs_grad(a) || needs_grad(s);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, s, id, n, k] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        if (needs_grad(a)) {
          T* ga = grad_buf(a).data<T>();
          const T* ps = val(s).data<T>();
          for (int64_t r = 0; r < n; ++r) {
            const T w = ps[r];
            for (int64_t c = 0; c < k; ++c) ga[r * k + c] += pg[r * k + c] * w;
          }
        }
        if (needs_grad(s)) {
          T* gs = grad_buf(s).data<T>();
          const T* pa = val(a).data<T>();
          for (int64_t r = 0; r < n; ++r) {
            T acc = T(0);
            for (int64_t c = 0; c < k; ++c) acc += pg[r * k + c] * pa[r * k + c];
            gs[r] += acc;
          }
        }
      });
    };
  return id;
}

NodeId Tape::group_sum(NodeId a, int64_t group) {
  const int64_t total = val(a).rows();
  if (group < 1 || total % group != 0) throw ShapeError("group_sum: rows not divisible by group");
  const int64_t r = total / group, k = val(a).cols();
  NumArray out({r, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    for (int64_t g = 0; g < r; ++g) {
      T* dst = po + g * k;
      for (int64_t i = 0; i < group; ++i) {
        const T* src = pa + (g * group + i) * k;
        for (int64_t c = 0; c < k; ++c) dst[c] += src[c];
      }
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, group, r, k] {
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        for (int64_t gi = 0; gi < r; ++gi) {
          const T* src = pg + gi * k;
          for (int64_t i = 0; i < group; ++i) {
            T* dst = ga + (gi * group + i) * k;
            for (int64_t c = 0; c < k; ++c) dst[c] += src[c];
          }
        }
      });
    };
  return id;
}

NodeId Tape::group_cumsum_exclusive(NodeId a, int64_t group) {
  const int64_t total = val(a).rows();
  if (group < 1 || total % group != 0)
    throw ShapeError("group_cumsum_exclusive: rows not divisible by group");
  const int64_t r = total / group, k = val(a).cols();
  NumArray out({total, k}, dtype_);
  dispatch(dtype_, [&]<class T>(T) {
    const T* pa = val(a).data<T>();
    T* po = out.data<T>();
    for (int64_t g = 0; g < r; ++g) {
      for (int64_t c = 0; c < k; ++c) {
        T acc = T(0);
        for (int64_t i = 0; i < group; ++i) {
          po[(g * group + i) * k + c] = acc;
          acc += pa[(g * group + i) * k + c];
        }
      }
    }
  });
  const bool ng = needs_grad(a);
  NodeId id = push(std::move(out), ng, {});
  if (ng)
    nodes_[static_cast<size_t>(id)].backward = [this, a, id, group, r, k] {
      // out_j = sum_{i<j} in_i  =>  d_in_i = sum_{j>i} g_j
      const NumArray& g = grad_buf(id);
      dispatch(dtype_, [&]<class T>(T) {
        const T* pg = g.data<T>();
        T* ga = grad_buf(a).data<T>();
        for (int64_t gi = 0; gi < r; ++gi) {
          for (int64_t c = 0; c < k; ++c) {
            T acc = T(0);
            for (int64_t i = group - 1; i >= 0; --i) {
              acc += pg[(gi * group + i) * k + c];
              // exclusive: element i receives the sum of gradients strictly after it
              ga[(gi * group + i) * k + c] += acc - pg[(gi * group + i) * k + c];
            }
          }
        }
      });
    };
  return id;
}

// ---------------------------------------------------------------------------
// Backward

void Tape::backward(NodeId loss) {
  if (val(loss).numel() != 1) throw ShapeError("backward: loss must be a scalar");
  if (!val(loss).all_finite()) throw NumericError("backward: loss is not finite");
  grad_buf(loss).fill(1.0);
  run_backward();
}

void Tape::backward_from(std::span<const std::pair<NodeId, NumArray>> seeds) {
  for (const auto& [id, seed] : seeds) {
    if (seed.shape() != val(id).shape()) throw ShapeError("backward_from: seed shape mismatch");
    grad_buf(id).add_inplace(seed.dtype() == dtype_ ? seed : seed.astype(dtype_));
  }
  run_backward();
}

void Tape::run_backward() {
  if (ran_backward_) throw Error("tape: backward already ran");
  ran_backward_ = true;
  for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backward && n.needs_grad && !n.grad.empty()) n.backward();
  }
}

void Tape::add_param_grads_to(ParamStore& store) const {
  for (const Node& n : nodes_) {
    if (!n.param_name.empty() && !n.grad.empty()) store.accumulate_grad(n.param_name, n.grad);
  }
}

}  // namespace grf
