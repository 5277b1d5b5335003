#ifndef L2O_TAPE_HPP
#define L2O_TAPE_HPP

#include <array>
#include <cstdint>
#include <vector>

#include "l2o/tensor.hpp"

namespace l2o {

using NodeId = int32_t;

enum class Op : uint8_t {
  leaf,
  add,
  sub,
  mul,
  matmul,
  bias_add,
  sigmoid,
  tanh_fn,
  relu,
  concat_cols,
  scale,
  sum,
  mean,
  slice,
  reshape,
  softmax_xent,
  // Fused recurrent-cell kernels. They keep unroll tapes small: the gate
  // nonlinearities are recomputed during the backward pass instead of being
  // stored as separate nodes.
  affine_gates,  // x*Wx + h*Wh + b  (bias broadcast over rows)
  cell_update,   // c' = sigmoid(i)*tanh(g) + sigmoid(f)*c
  cell_output,   // h' = sigmoid(o)*tanh(c')
};

struct Node {
  Op op = Op::leaf;
  int8_t arity = 0;
  std::array<NodeId, 5> parents{-1, -1, -1, -1, -1};
  int32_t i0 = 0, i1 = 0;  // slice offset/length, cell hidden size
  double scalar = 0.0;     // scale factor
  Tensor value;
  Tensor aux;                   // softmax probabilities for xent
  std::vector<int32_t> labels;  // xent class labels
};

class Tape;

// Reverse-mode gradients of one scalar root with respect to every node it
// reaches. Unreached nodes report a zero tensor of the node's value shape.
class GradientMap {
 public:
  bool has(NodeId id) const {
    return id >= 0 && id < static_cast<NodeId>(grads_.size()) && !grads_[id].data.empty();
  }
  const Tensor& grad_ref(NodeId id) const { return grads_[id]; }
  Tensor grad(const Tape& tape, NodeId id) const;

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
};

// Append-only record of a forward computation. Node parents always precede
// their children, so one reverse sweep yields exact gradients.
class Tape {
 public:
  NodeId leaf(Tensor value);
  NodeId leaf(const std::vector<int>& shape, const std::vector<double>& data) {
    return leaf(Tensor(shape, data));
  }

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId bias_add(NodeId m, NodeId bias);
  NodeId sigmoid(NodeId x);
  NodeId tanh(NodeId x);
  NodeId relu(NodeId x);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId scale(NodeId x, double factor);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId slice(NodeId x, int offset, int length);
  NodeId reshape(NodeId x, std::vector<int> shape);
  NodeId softmax_cross_entropy(NodeId logits, const std::vector<int32_t>& labels);
  NodeId detach(NodeId x);

  NodeId affine_gates(NodeId x, NodeId wx, NodeId h, NodeId wh, NodeId bias);
  NodeId cell_update(NodeId gates, NodeId c);
  NodeId cell_output(NodeId gates, NodeId c_new);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  double scalar_value(NodeId id) const { return nodes_[id].value.data[0]; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  NodeId size() const { return static_cast<NodeId>(nodes_.size()); }

  // Gradients of the scalar at `root`. The overload with `stop` only sweeps
  // node ids in [stop, root]; it is exact for any node whose every path to
  // the root stays above `stop`, which holds for the freshly built loss
  // subgraph sitting on top of a parameter node.
  GradientMap backward(NodeId root) const { return backward(root, 0); }
  GradientMap backward(NodeId root, NodeId stop) const;

  void clear() { nodes_.clear(); }

 private:
  NodeId push(Node n);
  void check_id(NodeId id) const;
  std::vector<Node> nodes_;
};

// Primitive dense kernels, shared by forward and backward passes.
namespace kernels {
// c += a * b for row-major a (n x k), b (k x m), c (n x m).
void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m);
// c += a * b' for a (n x m), b (k x m), c (n x k).
void matmul_bt_acc(const double* a, const double* b, double* c, int n, int m, int k);
// c += a' * b for a (n x k), b (n x m), c (k x m).
void matmul_at_acc(const double* a, const double* b, double* c, int n, int k, int m);
double sigmoid(double x);
}  // namespace kernels

}  // namespace l2o

#endif  // L2O_TAPE_HPP
