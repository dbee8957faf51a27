#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/numarray.h"

namespace grf {

class ParamStore;

using NodeId = int32_t;

enum class Act { None, Relu, Sigmoid, Softplus };

// Record-and-replay reverse-mode tape over whole arrays. One tape is confined
// to a single worker; a forward pass records nodes, backward() replays the
// stored adjoint closures in reverse creation order.
//
// Arrays are treated as 2-D (rows x cols). "set_*" ops view the input as M
// stacked row-blocks of equal size and reduce across the stack; "group_*" ops
// reduce over consecutive row groups (e.g. the samples of one ray).
class Tape {
public:
  explicit Tape(Dtype dt, bool check_finite = true);

  Dtype dtype() const { return dtype_; }
  void set_check_finite(bool on) { check_finite_ = on; }
  int64_t node_count() const { return static_cast<int64_t>(nodes_.size()); }

  // Leaves.
  NodeId constant(NumArray v);
  NodeId constant(std::shared_ptr<const NumArray> v);
  NodeId input(NumArray v);  // leaf that collects a gradient (e.g. a cached feature map)
  NodeId param(const ParamStore& store, const std::string& name);

  // Elementwise.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId div(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double c);
  NodeId exp(NodeId a);
  NodeId sin(NodeId a);
  NodeId cos(NodeId a);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softplus(NodeId a);

  // Data movement. gather_rows: out row i = concat of `taps` source rows
  // idx[i*taps..]; index -1 reads a zero row. Gradients scatter-add back.
  NodeId concat_cols(std::span<const NodeId> parts);
  NodeId concat_rows(std::span<const NodeId> parts);
  NodeId gather_rows(NodeId a, std::shared_ptr<const std::vector<int64_t>> idx, int64_t taps = 1);

  // Linear algebra ([n,k] x [k,m]; linear fuses bias + activation).
  NodeId matmul(NodeId a, NodeId b);
  NodeId linear(NodeId x, NodeId w, NodeId b, Act act);

  // Reductions / structured ops.
  NodeId sum_all(NodeId a);                        // -> [1]
  NodeId set_sum(NodeId a, int64_t m);             // [m*n,k] -> [n,k]
  NodeId set_max(NodeId a, int64_t m);             // gradient routes to argmax
  NodeId set_broadcast(NodeId a, int64_t m);       // [n,k] -> [m*n,k]
  NodeId set_softmax(NodeId a, int64_t m);         // softmax across the stack axis
  NodeId mul_rows(NodeId a, NodeId s);             // [n,k] * [n,1]
  NodeId group_sum(NodeId a, int64_t group);       // [r*group,k] -> [r,k]
  NodeId group_cumsum_exclusive(NodeId a, int64_t group);

  const NumArray& value(NodeId id) const { return *nodes_[static_cast<size_t>(id)].value; }
  std::shared_ptr<const NumArray> value_ptr(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  // Gradient of a node; zero array if the node never received one.
  const NumArray& grad(NodeId id);

  // Reverse sweep from a scalar loss (grad seeded with 1).
  void backward(NodeId loss);
  // Reverse sweep from explicit seeds (for staged backprop through cached
  // intermediates such as feature maps).
  void backward_from(std::span<const std::pair<NodeId, NumArray>> seeds);

  // Accumulate parameter-leaf gradients into the store, in creation order.
  void add_param_grads_to(ParamStore& store) const;

private:
  struct Node {
    std::shared_ptr<const NumArray> value;
    NumArray grad;  // lazily allocated
    bool needs_grad = false;
    std::string param_name;           // set for param leaves
    std::function<void()> backward;   // null for leaves
  };

  NodeId push(std::shared_ptr<const NumArray> value, bool needs_grad, std::function<void()> bw);
  NodeId push(NumArray value, bool needs_grad, std::function<void()> bw) {
    return push(std::make_shared<const NumArray>(std::move(value)), needs_grad, std::move(bw));
  }
  NumArray& grad_buf(NodeId id);
  const NumArray& val(NodeId id) const { return *nodes_[static_cast<size_t>(id)].value; }
  void check_same_shape(NodeId a, NodeId b, const char* op) const;
  void run_backward();

  NodeId unary_map(NodeId a, int kind);  // shared kernel driver for exp/sin/...

  Dtype dtype_;
  bool check_finite_;
  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace grf
