#include "l2o/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace l2o {

namespace kernels {

void matmul_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_bt_acc(const double* a, const double* b, double* c, int n, int m, int k) {
  // c (n x k) += a (n x m) * b^T, b stored (k x m).
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<size_t>(i) * m;
    double* ci = c + static_cast<size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      const double* bj = b + static_cast<size_t>(j) * m;
      double s = 0.0;
      for (int p = 0; p < m; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void matmul_at_acc(const double* a, const double* b, double* c, int n, int k, int m) {
  // c (k x m) += a^T * b, a stored (n x k), b (n x m).
  for (int i = 0; i < n; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    const double* bi = b + static_cast<size_t>(i) * m;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + static_cast<size_t>(p) * m;
      for (int j = 0; j < m; ++j) cp[j] += av * bi[j];
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace kernels

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw dim_error(std::string(op) + ": expected a rank-2 tensor, got shape " + t.shape_str());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b))
    throw dim_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_id(NodeId id) const {
  if (id < 0 || id >= size()) throw contract_error("tape: node id out of range");
}

NodeId Tape::leaf(Tensor value) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  require_same_shape(value(a), value(b), "add");
  Node n;
  n.op = Op::add;
  n.arity = 2;
  n.parents[0] = a;
  n.parents[1] = b;
  n.value = value(a);
  const auto& bd = value(b).data;
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += bd[i];
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  require_same_shape(value(a), value(b), "sub");
  Node n;
  n.op = Op::sub;
  n.arity = 2;
  n.parents[0] = a;
  n.parents[1] = b;
  n.value = value(a);
  const auto& bd = value(b).data;
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= bd[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  require_same_shape(value(a), value(b), "mul");
  Node n;
  n.op = Op::mul;
  n.arity = 2;
  n.parents[0] = a;
  n.parents[1] = b;
  n.value = value(a);
  const auto& bd = value(b).data;
  for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= bd[i];
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.shape[1] != bv.shape[0])
    throw dim_error("matmul: incompatible shapes " + av.shape_str() + " * " + bv.shape_str());
  Node n;
  n.op = Op::matmul;
  n.arity = 2;
  n.parents[0] = a;
  n.parents[1] = b;
  n.value = Tensor({av.shape[0], bv.shape[1]});
  kernels::matmul_acc(av.data.data(), bv.data.data(), n.value.data.data(), av.shape[0],
                      av.shape[1], bv.shape[1]);
  return push(std::move(n));
}

NodeId Tape::bias_add(NodeId m, NodeId bias) {
  check_id(m);
  check_id(bias);
  const Tensor& mv = value(m);
  const Tensor& bv = value(bias);
  require_rank2(mv, "bias_add");
  if (bv.rank() != 1 || bv.shape[0] != mv.shape[1])
    throw dim_error("bias_add: bias shape " + bv.shape_str() + " does not match matrix " +
                    mv.shape_str());
  Node n;
  n.op = Op::bias_add;
  n.arity = 2;
  n.parents[0] = m;
  n.parents[1] = bias;
  n.value = mv;
  const int rows = mv.shape[0], cols = mv.shape[1];
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) n.value.data[static_cast<size_t>(i) * cols + j] += bv.data[j];
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::sigmoid;
  n.arity = 1;
  n.parents[0] = x;
  n.value = value(x);
  for (auto& v : n.value.data) v = kernels::sigmoid(v);
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::tanh_fn;
  n.arity = 1;
  n.parents[0] = x;
  n.value = value(x);
  for (auto& v : n.value.data) v = std::tanh(v);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::relu;
  n.arity = 1;
  n.parents[0] = x;
  n.value = value(x);
  for (auto& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  check_id(a);
  check_id(b);
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require_rank2(av, "concat_cols");
  require_rank2(bv, "concat_cols");
  if (av.shape[0] != bv.shape[0])
    throw dim_error("concat_cols: row mismatch " + av.shape_str() + " vs " + bv.shape_str());
  const int rows = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
  Node n;
  n.op = Op::concat_cols;
  n.arity = 2;
  n.parents[0] = a;
  n.parents[1] = b;
  n.value = Tensor({rows, ca + cb});
  for (int i = 0; i < rows; ++i) {
    std::memcpy(&n.value.data[static_cast<size_t>(i) * (ca + cb)],
                &av.data[static_cast<size_t>(i) * ca], sizeof(double) * ca);
    std::memcpy(&n.value.data[static_cast<size_t>(i) * (ca + cb) + ca],
                &bv.data[static_cast<size_t>(i) * cb], sizeof(double) * cb);
  }
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double factor) {
  check_id(x);
  Node n;
  n.op = Op::scale;
  n.arity = 1;
  n.parents[0] = x;
  n.scalar = factor;
  n.value = value(x);
  for (auto& v : n.value.data) v *= factor;
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  check_id(x);
  Node n;
  n.op = Op::sum;
  n.arity = 1;
  n.parents[0] = x;
  double s = 0.0;
  for (double v : value(x).data) s += v;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

NodeId Tape::mean(NodeId x) {
  check_id(x);
  if (value(x).numel() == 0) throw contract_error("mean: empty tensor");
  Node n;
  n.op = Op::mean;
  n.arity = 1;
  n.parents[0] = x;
  double s = 0.0;
  for (double v : value(x).data) s += v;
  n.value = Tensor::scalar(s / static_cast<double>(value(x).numel()));
  return push(std::move(n));
}

NodeId Tape::slice(NodeId x, int offset, int length) {
  check_id(x);
  const Tensor& xv = value(x);
  if (xv.rank() != 1)
    throw contract_error("slice: expected a rank-1 tensor, got shape " + xv.shape_str());
  if (offset < 0 || length < 0 || offset + length > xv.shape[0])
    throw dim_error("slice: range [" + std::to_string(offset) + ", " +
                    std::to_string(offset + length) + ") out of bounds for " + xv.shape_str());
  Node n;
  n.op = Op::slice;
  n.arity = 1;
  n.parents[0] = x;
  n.i0 = offset;
  n.i1 = length;
  n.value = Tensor({length});
  std::memcpy(n.value.data.data(), xv.data.data() + offset, sizeof(double) * length);
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
  check_id(x);
  if (Tensor::numel_of(shape) != value(x).numel())
    throw dim_error("reshape: cannot view " + value(x).shape_str() + " as " +
                    Tensor::shape_str(shape));
  Node n;
  n.op = Op::reshape;
  n.arity = 1;
  n.parents[0] = x;
  n.value = Tensor(std::move(shape), value(x).data);
  return push(std::move(n));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, const std::vector<int32_t>& labels) {
  check_id(logits);
  const Tensor& lv = value(logits);
  require_rank2(lv, "softmax_cross_entropy");
  const int rows = lv.shape[0], classes = lv.shape[1];
  if (static_cast<int>(labels.size()) != rows)
    throw dim_error("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(rows) + " logit rows");
  Node n;
  n.op = Op::softmax_xent;
  n.arity = 1;
  n.parents[0] = logits;
  n.labels = labels;
  n.aux = Tensor({rows, classes});
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw index_error("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                        " out of range for " + std::to_string(classes) + " classes");
    const double* row = &lv.data[static_cast<size_t>(i) * classes];
    double mx = row[0];
    for (int j = 1; j < classes; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < classes; ++j)
      n.aux.data[static_cast<size_t>(i) * classes + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  n.value = Tensor::scalar(total / rows);
  return push(std::move(n));
}

NodeId Tape::detach(NodeId x) {
  check_id(x);
  return leaf(value(x));
}

NodeId Tape::affine_gates(NodeId x, NodeId wx, NodeId h, NodeId wh, NodeId bias) {
  check_id(x);
  check_id(wx);
  check_id(h);
  check_id(wh);
  check_id(bias);
  const Tensor& xv = value(x);
  const Tensor& wxv = value(wx);
  const Tensor& hv = value(h);
  const Tensor& whv = value(wh);
  const Tensor& bv = value(bias);
  require_rank2(xv, "affine_gates");
  require_rank2(wxv, "affine_gates");
  require_rank2(hv, "affine_gates");
  require_rank2(whv, "affine_gates");
  if (xv.shape[1] != wxv.shape[0] || hv.shape[1] != whv.shape[0] ||
      wxv.shape[1] != whv.shape[1] || xv.shape[0] != hv.shape[0] || bv.rank() != 1 ||
      bv.shape[0] != wxv.shape[1])
    throw dim_error("affine_gates: incompatible shapes " + xv.shape_str() + ", " +
                    wxv.shape_str() + ", " + hv.shape_str() + ", " + whv.shape_str() + ", " +
                    bv.shape_str());
  const int rows = xv.shape[0], out = wxv.shape[1];
  Node n;
  n.op = Op::affine_gates;
  n.arity = 5;
  n.parents = {x, wx, h, wh, bias};
  n.value = Tensor({rows, out});
  for (int i = 0; i < rows; ++i)
    std::memcpy(&n.value.data[static_cast<size_t>(i) * out], bv.data.data(),
                sizeof(double) * out);
  kernels::matmul_acc(xv.data.data(), wxv.data.data(), n.value.data.data(), rows, xv.shape[1],
                      out);
  kernels::matmul_acc(hv.data.data(), whv.data.data(), n.value.data.data(), rows, hv.shape[1],
                      out);
  return push(std::move(n));
}

NodeId Tape::cell_update(NodeId gates, NodeId c) {
  check_id(gates);
  check_id(c);
  const Tensor& gv = value(gates);
  const Tensor& cv = value(c);
  require_rank2(gv, "cell_update");
  require_rank2(cv, "cell_update");
  const int hidden = cv.shape[1];
  if (gv.shape[1] != 4 * hidden || gv.shape[0] != cv.shape[0])
    throw dim_error("cell_update: gates " + gv.shape_str() + " do not match cell " +
                    cv.shape_str());
  const int rows = cv.shape[0];
  Node n;
  n.op = Op::cell_update;
  n.arity = 2;
  n.parents[0] = gates;
  n.parents[1] = c;
  n.i1 = hidden;
  n.value = Tensor({rows, hidden});
  // Gate layout along columns: [input | forget | candidate | output].
  for (int r = 0; r < rows; ++r) {
    const double* g = &gv.data[static_cast<size_t>(r) * 4 * hidden];
    const double* cp = &cv.data[static_cast<size_t>(r) * hidden];
    double* outp = &n.value.data[static_cast<size_t>(r) * hidden];
    for (int j = 0; j < hidden; ++j) {
      const double ig = kernels::sigmoid(g[j]);
      const double fg = kernels::sigmoid(g[hidden + j]);
      const double cand = std::tanh(g[2 * hidden + j]);
      outp[j] = fg * cp[j] + ig * cand;
    }
  }
  return push(std::move(n));
}

NodeId Tape::cell_output(NodeId gates, NodeId c_new) {
  check_id(gates);
  check_id(c_new);
  const Tensor& gv = value(gates);
  const Tensor& cv = value(c_new);
  require_rank2(gv, "cell_output");
  require_rank2(cv, "cell_output");
  const int hidden = cv.shape[1];
  if (gv.shape[1] != 4 * hidden || gv.shape[0] != cv.shape[0])
    throw dim_error("cell_output: gates " + gv.shape_str() + " do not match cell " +
                    cv.shape_str());
  const int rows = cv.shape[0];
  Node n;
  n.op = Op::cell_output;
  n.arity = 2;
  n.parents[0] = gates;
  n.parents[1] = c_new;
  n.i1 = hidden;
  n.value = Tensor({rows, hidden});
  for (int r = 0; r < rows; ++r) {
    const double* g = &gv.data[static_cast<size_t>(r) * 4 * hidden];
    const double* cp = &cv.data[static_cast<size_t>(r) * hidden];
    double* outp = &n.value.data[static_cast<size_t>(r) * hidden];
    for (int j = 0; j < hidden; ++j)
      outp[j] = kernels::sigmoid(g[3 * hidden + j]) * std::tanh(cp[j]);
  }
  return push(std::move(n));
}

Tensor GradientMap::grad(const Tape& tape, NodeId id) const {
  if (has(id)) return grads_[id];
  return Tensor::zeros(tape.value(id).shape);
}

GradientMap Tape::backward(NodeId root, NodeId stop) const {
  check_id(root);
  if (stop < 0) stop = 0;
  const Tensor& rv = value(root);
  if (!rv.is_scalar())
    throw contract_error("backward: root must be a rank-0 scalar, got shape " + rv.shape_str());

  GradientMap gm;
  gm.grads_.resize(static_cast<size_t>(root) + 1);
  gm.grads_[root] = Tensor::scalar(1.0);

  auto acc = [&](NodeId id, int64_t offset, const double* src, int64_t count) {
    Tensor& g = gm.grads_[id];
    if (g.data.empty()) g = Tensor::zeros(nodes_[id].value.shape);
    double* dst = g.data.data() + offset;
    for (int64_t i = 0; i < count; ++i) dst[i] += src[i];
  };

  for (NodeId id = root; id >= stop; --id) {
    if (!gm.has(id)) continue;
    const Node& n = nodes_[id];
    if (n.op == Op::leaf) continue;
    const Tensor& gy = gm.grads_[id];
    switch (n.op) {
      case Op::add: {
        acc(n.parents[0], 0, gy.data.data(), gy.numel());
        acc(n.parents[1], 0, gy.data.data(), gy.numel());
        break;
      }
      case Op::sub: {
        acc(n.parents[0], 0, gy.data.data(), gy.numel());
        Tensor& g = gm.grads_[n.parents[1]];
        if (g.data.empty()) g = Tensor::zeros(nodes_[n.parents[1]].value.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) g.data[i] -= gy.data[i];
        break;
      }
      case Op::mul: {
        const Tensor& a = nodes_[n.parents[0]].value;
        const Tensor& b = nodes_[n.parents[1]].value;
        Tensor& ga = gm.grads_[n.parents[0]];
        if (ga.data.empty()) ga = Tensor::zeros(a.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) ga.data[i] += gy.data[i] * b.data[i];
        Tensor& gb = gm.grads_[n.parents[1]];
        if (gb.data.empty()) gb = Tensor::zeros(b.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) gb.data[i] += gy.data[i] * a.data[i];
        break;
      }
      case Op::matmul: {
        const Tensor& a = nodes_[n.parents[0]].value;
        const Tensor& b = nodes_[n.parents[1]].value;
        Tensor& ga = gm.grads_[n.parents[0]];
        if (ga.data.empty()) ga = Tensor::zeros(a.shape);
        Tensor& gb = gm.grads_[n.parents[1]];
        if (gb.data.empty()) gb = Tensor::zeros(b.shape);
        // dA = dY * B^T ; dB = A^T * dY
        kernels::matmul_bt_acc(gy.data.data(), b.data.data(), ga.data.data(), a.shape[0],
                               b.shape[1], a.shape[1]);
        kernels::matmul_at_acc(a.data.data(), gy.data.data(), gb.data.data(), a.shape[0],
                               a.shape[1], b.shape[1]);
        break;
      }
      case Op::bias_add: {
        acc(n.parents[0], 0, gy.data.data(), gy.numel());
        const int rows = gy.shape[0], cols = gy.shape[1];
        Tensor& gb = gm.grads_[n.parents[1]];
        if (gb.data.empty()) gb = Tensor::zeros(nodes_[n.parents[1]].value.shape);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) gb.data[j] += gy.data[static_cast<size_t>(i) * cols + j];
        break;
      }
      case Op::sigmoid: {
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(n.value.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) {
          const double y = n.value.data[i];
          gx.data[i] += gy.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::tanh_fn: {
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(n.value.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) {
          const double y = n.value.data[i];
          gx.data[i] += gy.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::relu: {
        const Tensor& x = nodes_[n.parents[0]].value;
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(x.shape);
        // Subgradient 0 at the kink.
        for (int64_t i = 0; i < gy.numel(); ++i)
          if (x.data[i] > 0.0) gx.data[i] += gy.data[i];
        break;
      }
      case Op::concat_cols: {
        const Tensor& a = nodes_[n.parents[0]].value;
        const Tensor& b = nodes_[n.parents[1]].value;
        const int rows = a.shape[0], ca = a.shape[1], cb = b.shape[1];
        Tensor& ga = gm.grads_[n.parents[0]];
        if (ga.data.empty()) ga = Tensor::zeros(a.shape);
        Tensor& gb = gm.grads_[n.parents[1]];
        if (gb.data.empty()) gb = Tensor::zeros(b.shape);
        for (int i = 0; i < rows; ++i) {
          const double* row = &gy.data[static_cast<size_t>(i) * (ca + cb)];
          double* gar = &ga.data[static_cast<size_t>(i) * ca];
          double* gbr = &gb.data[static_cast<size_t>(i) * cb];
          for (int j = 0; j < ca; ++j) gar[j] += row[j];
          for (int j = 0; j < cb; ++j) gbr[j] += row[ca + j];
        }
        break;
      }
      case Op::scale: {
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(n.value.shape);
        for (int64_t i = 0; i < gy.numel(); ++i) gx.data[i] += n.scalar * gy.data[i];
        break;
      }
      case Op::sum: {
        const Tensor& x = nodes_[n.parents[0]].value;
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(x.shape);
        const double g = gy.data[0];
        for (auto& v : gx.data) v += g;
        break;
      }
      case Op::mean: {
        const Tensor& x = nodes_[n.parents[0]].value;
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(x.shape);
        const double g = gy.data[0] / static_cast<double>(x.numel());
        for (auto& v : gx.data) v += g;
        break;
      }
      case Op::slice: {
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(nodes_[n.parents[0]].value.shape);
        for (int i = 0; i < n.i1; ++i) gx.data[n.i0 + i] += gy.data[i];
        break;
      }
      case Op::reshape: {
        acc(n.parents[0], 0, gy.data.data(), gy.numel());
        break;
      }
      case Op::softmax_xent: {
        const Tensor& probs = n.aux;
        const int rows = probs.shape[0], classes = probs.shape[1];
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(probs.shape);
        const double g = gy.data[0] / rows;
        for (int i = 0; i < rows; ++i) {
          const size_t base = static_cast<size_t>(i) * classes;
          for (int j = 0; j < classes; ++j) gx.data[base + j] += g * probs.data[base + j];
          gx.data[base + n.labels[i]] -= g;
        }
        break;
      }
      case Op::affine_gates: {
        const Tensor& x = nodes_[n.parents[0]].value;
        const Tensor& wx = nodes_[n.parents[1]].value;
        const Tensor& h = nodes_[n.parents[2]].value;
        const Tensor& wh = nodes_[n.parents[3]].value;
        const int rows = gy.shape[0], out = gy.shape[1];
        Tensor& gx = gm.grads_[n.parents[0]];
        if (gx.data.empty()) gx = Tensor::zeros(x.shape);
        Tensor& gwx = gm.grads_[n.parents[1]];
        if (gwx.data.empty()) gwx = Tensor::zeros(wx.shape);
        Tensor& gh = gm.grads_[n.parents[2]];
        if (gh.data.empty()) gh = Tensor::zeros(h.shape);
        Tensor& gwh = gm.grads_[n.parents[3]];
        if (gwh.data.empty()) gwh = Tensor::zeros(wh.shape);
        Tensor& gb = gm.grads_[n.parents[4]];
        if (gb.data.empty()) gb = Tensor::zeros(nodes_[n.parents[4]].value.shape);
        kernels::matmul_bt_acc(gy.data.data(), wx.data.data(), gx.data.data(), rows, out,
                               x.shape[1]);
        kernels::matmul_at_acc(x.data.data(), gy.data.data(), gwx.data.data(), rows, x.shape[1],
                               out);
        kernels::matmul_bt_acc(gy.data.data(), wh.data.data(), gh.data.data(), rows, out,
                               h.shape[1]);
        kernels::matmul_at_acc(h.data.data(), gy.data.data(), gwh.data.data(), rows, h.shape[1],
                               out);
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < out; ++j) gb.data[j] += gy.data[static_cast<size_t>(i) * out + j];
        break;
      }
      case Op::cell_update: {
        const Tensor& gates = nodes_[n.parents[0]].value;
        const Tensor& c = nodes_[n.parents[1]].value;
        const int rows = c.shape[0], hidden = n.i1;
        Tensor& gg = gm.grads_[n.parents[0]];
        if (gg.data.empty()) gg = Tensor::zeros(gates.shape);
        Tensor& gc = gm.grads_[n.parents[1]];
        if (gc.data.empty()) gc = Tensor::zeros(c.shape);
        for (int r = 0; r < rows; ++r) {
          const double* g = &gates.data[static_cast<size_t>(r) * 4 * hidden];
          const double* cp = &c.data[static_cast<size_t>(r) * hidden];
          const double* dy = &gy.data[static_cast<size_t>(r) * hidden];
          double* dg = &gg.data[static_cast<size_t>(r) * 4 * hidden];
          double* dc = &gc.data[static_cast<size_t>(r) * hidden];
          for (int j = 0; j < hidden; ++j) {
            const double ig = kernels::sigmoid(g[j]);
            const double fg = kernels::sigmoid(g[hidden + j]);
            const double cand = std::tanh(g[2 * hidden + j]);
            dg[j] += dy[j] * cand * ig * (1.0 - ig);
            dg[hidden + j] += dy[j] * cp[j] * fg * (1.0 - fg);
            dg[2 * hidden + j] += dy[j] * ig * (1.0 - cand * cand);
            dc[j] += dy[j] * fg;
          }
        }
        break;
      }
      case Op::cell_output: {
        const Tensor& gates = nodes_[n.parents[0]].value;
        const Tensor& c = nodes_[n.parents[1]].value;
        const int rows = c.shape[0], hidden = n.i1;
        Tensor& gg = gm.grads_[n.parents[0]];
        if (gg.data.empty()) gg = Tensor::zeros(gates.shape);
        Tensor& gc = gm.grads_[n.parents[1]];
        if (gc.data.empty()) gc = Tensor::zeros(c.shape);
        for (int r = 0; r < rows; ++r) {
          const double* g = &gates.data[static_cast<size_t>(r) * 4 * hidden];
          const double* cp = &c.data[static_cast<size_t>(r) * hidden];
          const double* dy = &gy.data[static_cast<size_t>(r) * hidden];
          double* dg = &gg.data[static_cast<size_t>(r) * 4 * hidden];
          double* dc = &gc.data[static_cast<size_t>(r) * hidden];
          for (int j = 0; j < hidden; ++j) {
            const double og = kernels::sigmoid(g[3 * hidden + j]);
            const double tc = std::tanh(cp[j]);
            dg[3 * hidden + j] += dy[j] * tc * og * (1.0 - og);
            dc[j] += dy[j] * og * (1.0 - tc * tc);
          }
        }
        break;
      }
      case Op::leaf:
        break;
    }
  }
  return gm;
}

}  // namespace l2o
