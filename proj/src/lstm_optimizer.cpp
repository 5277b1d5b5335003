#include "l2o/lstm_optimizer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "l2o/errors.hpp"
#include "l2o/rng.hpp"

namespace l2o {

namespace {

Tensor uniform_fan_in(std::vector<int> shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return random_uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace

LstmOptimizerParams init_params(uint64_t seed, int rank, int hidden) {
  if (rank < 0) throw contract_error("init_params: rank must be >= 0");
  if (hidden < 1) throw contract_error("init_params: hidden size must be >= 1");
  Rng rng(derive_seed(seed, 0x11));
  LstmOptimizerParams p;
  p.rank = rank;
  p.hidden = hidden;
  const int in1 = p.input_width();
  p.layer1.wx = uniform_fan_in({in1, 4 * hidden}, in1, rng);
  p.layer1.wh = uniform_fan_in({hidden, 4 * hidden}, hidden, rng);
  p.layer1.b = Tensor::zeros({4 * hidden});
  p.layer2.wx = uniform_fan_in({hidden, 4 * hidden}, hidden, rng);
  p.layer2.wh = uniform_fan_in({hidden, 4 * hidden}, hidden, rng);
  p.layer2.b = Tensor::zeros({4 * hidden});
  // Forget-gate bias starts at +1; zero head makes the first updates exactly
  // zero so an untrained optimizer is a no-op.
  for (int j = 0; j < hidden; ++j) {
    p.layer1.b.data[hidden + j] = 1.0;
    p.layer2.b.data[hidden + j] = 1.0;
  }
  p.head_w = Tensor::zeros({hidden, 1});
  p.head_b = Tensor::zeros({1});
  p.output_scale = 0.1;
  p.preprocess_p = 10.0;
  return p;
}

CoordStates zero_states(int coords, int hidden) {
  CoordStates s;
  s.h1 = Tensor::zeros({coords, hidden});
  s.c1 = Tensor::zeros({coords, hidden});
  s.h2 = Tensor::zeros({coords, hidden});
  s.c2 = Tensor::zeros({coords, hidden});
  return s;
}

Tensor preprocess_gradient(const Tensor& grad, double p) {
  if (p <= 0.0) throw contract_error("preprocess_gradient: p must be positive");
  const int n = static_cast<int>(grad.numel());
  Tensor out({n, 2});
  const double cutoff = std::exp(-p);
  const double blowup = std::exp(p);
  for (int i = 0; i < n; ++i) {
    const double g = grad.data[i];
    if (std::abs(g) >= cutoff) {
      out.at(i, 0) = std::log(std::abs(g)) / p;
      out.at(i, 1) = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
    } else {
      out.at(i, 0) = -1.0;
      out.at(i, 1) = blowup * g;
    }
  }
  return out;
}

BoundParams bind_params(Tape& tape, const LstmOptimizerParams& params) {
  BoundParams b;
  b.wx1 = tape.leaf(params.layer1.wx);
  b.wh1 = tape.leaf(params.layer1.wh);
  b.b1 = tape.leaf(params.layer1.b);
  b.wx2 = tape.leaf(params.layer2.wx);
  b.wh2 = tape.leaf(params.layer2.wh);
  b.b2 = tape.leaf(params.layer2.b);
  b.head_w = tape.leaf(params.head_w);
  b.head_b = tape.leaf(params.head_b);
  return b;
}

BoundStates bind_states(Tape& tape, const CoordStates& states) {
  BoundStates b;
  b.h1 = tape.leaf(states.h1);
  b.c1 = tape.leaf(states.c1);
  b.h2 = tape.leaf(states.h2);
  b.c2 = tape.leaf(states.c2);
  return b;
}

StepResult optimizer_step(Tape& tape, const BoundParams& params, const LstmOptimizerParams& meta,
                          const OptimizerInput& input, const BoundStates& states) {
  const Tensor& gf = input.grad_features;
  if (gf.rank() != 2 || gf.shape[1] != 2)
    throw contract_error("optimizer_step: gradient features must be n x 2, got " +
                         gf.shape_str());
  if (static_cast<int>(input.dmd_features.size()) != 2 * meta.rank)
    throw contract_error("optimizer_step: expected " + std::to_string(2 * meta.rank) +
                         " dmd features, got " + std::to_string(input.dmd_features.size()));
  const int n = gf.shape[0];
  const int width = meta.input_width();

  // Inputs enter as one detached leaf: no meta-gradient flows into the gradient
  // preprocessing or the DMD eigenvalues.
  Tensor x({n, width});
  for (int i = 0; i < n; ++i) {
    double* row = &x.data[static_cast<size_t>(i) * width];
    row[0] = gf.at(i, 0);
    row[1] = gf.at(i, 1);
    for (size_t k = 0; k < input.dmd_features.size(); ++k) row[2 + k] = input.dmd_features[k];
  }
  const NodeId xin = tape.leaf(std::move(x));

  const NodeId g1 = tape.affine_gates(xin, params.wx1, states.h1, params.wh1, params.b1);
  const NodeId c1 = tape.cell_update(g1, states.c1);
  const NodeId h1 = tape.cell_output(g1, c1);

  const NodeId g2 = tape.affine_gates(h1, params.wx2, states.h2, params.wh2, params.b2);
  const NodeId c2 = tape.cell_update(g2, states.c2);
  const NodeId h2 = tape.cell_output(g2, c2);

  NodeId update = tape.matmul(h2, params.head_w);
  update = tape.bias_add(update, params.head_b);
  update = tape.scale(update, meta.output_scale);
  update = tape.reshape(update, {n});

  return {update, BoundStates{h1, c1, h2, c2}};
}

CoordStates read_states(const Tape& tape, const BoundStates& states) {
  CoordStates out;
  out.h1 = tape.value(states.h1);
  out.c1 = tape.value(states.c1);
  out.h2 = tape.value(states.h2);
  out.c2 = tape.value(states.c2);
  return out;
}

namespace {

std::vector<const Tensor*> tensor_order(const LstmOptimizerParams& p) {
  return {&p.layer1.wx, &p.layer1.wh, &p.layer1.b, &p.layer2.wx,
          &p.layer2.wh, &p.layer2.b, &p.head_w,    &p.head_b};
}

std::vector<Tensor*> tensor_order(LstmOptimizerParams& p) {
  return {&p.layer1.wx, &p.layer1.wh, &p.layer1.b, &p.layer2.wx,
          &p.layer2.wh, &p.layer2.b, &p.head_w,    &p.head_b};
}

}  // namespace

int64_t param_count(const LstmOptimizerParams& p) {
  int64_t n = 0;
  for (const Tensor* t : tensor_order(p)) n += t->numel();
  return n;
}

Tensor flatten_params(const LstmOptimizerParams& p) {
  Tensor out({static_cast<int>(param_count(p))});
  size_t at = 0;
  for (const Tensor* t : tensor_order(p)) {
    std::memcpy(out.data.data() + at, t->data.data(), sizeof(double) * t->data.size());
    at += t->data.size();
  }
  return out;
}

void unflatten_params(const Tensor& flat, LstmOptimizerParams& p) {
  if (flat.numel() != param_count(p))
    throw dim_error("unflatten_params: flat length " + std::to_string(flat.numel()) +
                    " does not match parameter count " + std::to_string(param_count(p)));
  size_t at = 0;
  for (Tensor* t : tensor_order(p)) {
    std::memcpy(t->data.data(), flat.data.data() + at, sizeof(double) * t->data.size());
    at += t->data.size();
  }
}

Tensor gather_param_grads(const GradientMap& gm, const Tape& tape, const BoundParams& bound) {
  const NodeId ids[] = {bound.wx1, bound.wh1, bound.b1,     bound.wx2,
                        bound.wh2, bound.b2,  bound.head_w, bound.head_b};
  int64_t total = 0;
  for (NodeId id : ids) total += tape.value(id).numel();
  Tensor out({static_cast<int>(total)});
  size_t at = 0;
  for (NodeId id : ids) {
    const int64_t count = tape.value(id).numel();
    if (gm.has(id)) {
      std::memcpy(out.data.data() + at, gm.grad_ref(id).data.data(),
                  sizeof(double) * static_cast<size_t>(count));
    }
    at += static_cast<size_t>(count);
  }
  return out;
}

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<int>>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["R"] = ckpt.params.rank;
  j["m"] = ckpt.snapshots_m;
  j["hidden_size"] = ckpt.params.hidden;
  j["output_scale"] = ckpt.params.output_scale;
  j["preprocess_p"] = ckpt.params.preprocess_p;
  j["score"] = ckpt.score;
  j["epoch"] = ckpt.epoch;
  j["params"] = {
      {"layer1_wx", tensor_to_json(ckpt.params.layer1.wx)},
      {"layer1_wh", tensor_to_json(ckpt.params.layer1.wh)},
      {"layer1_b", tensor_to_json(ckpt.params.layer1.b)},
      {"layer2_wx", tensor_to_json(ckpt.params.layer2.wx)},
      {"layer2_wh", tensor_to_json(ckpt.params.layer2.wh)},
      {"layer2_b", tensor_to_json(ckpt.params.layer2.b)},
      {"head_w", tensor_to_json(ckpt.params.head_w)},
      {"head_b", tensor_to_json(ckpt.params.head_b)},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open checkpoint for writing: " + path);
  out << j.dump(1);
  out << "\n";
  if (!out) throw io_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(parse_error::kind::bad_value,
                      "checkpoint " + path + " is not valid JSON: " + e.what());
  }
  try {
    Checkpoint ckpt;
    ckpt.params.rank = j.at("R").get<int>();
    ckpt.params.hidden = j.at("hidden_size").get<int>();
    ckpt.params.output_scale = j.at("output_scale").get<double>();
    ckpt.params.preprocess_p = j.at("preprocess_p").get<double>();
    ckpt.snapshots_m = j.at("m").get<int>();
    ckpt.score = j.value("score", 0.0);
    ckpt.epoch = j.value("epoch", 0);
    const auto& p = j.at("params");
    ckpt.params.layer1.wx = tensor_from_json(p.at("layer1_wx"));
    ckpt.params.layer1.wh = tensor_from_json(p.at("layer1_wh"));
    ckpt.params.layer1.b = tensor_from_json(p.at("layer1_b"));
    ckpt.params.layer2.wx = tensor_from_json(p.at("layer2_wx"));
    ckpt.params.layer2.wh = tensor_from_json(p.at("layer2_wh"));
    ckpt.params.layer2.b = tensor_from_json(p.at("layer2_b"));
    ckpt.params.head_w = tensor_from_json(p.at("head_w"));
    ckpt.params.head_b = tensor_from_json(p.at("head_b"));
    const int expect_in = ckpt.params.input_width();
    if (ckpt.params.layer1.wx.shape[0] != expect_in)
      throw parse_error(parse_error::kind::bad_value,
                        "checkpoint " + path + ": layer1 input width " +
                            std::to_string(ckpt.params.layer1.wx.shape[0]) +
                            " does not match R=" + std::to_string(ckpt.params.rank));
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(parse_error::kind::bad_value,
                      "checkpoint " + path + " is missing fields: " + e.what());
  }
}

}  // namespace l2o
