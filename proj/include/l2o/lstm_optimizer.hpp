#ifndef L2O_LSTM_OPTIMIZER_HPP
#define L2O_LSTM_OPTIMIZER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "l2o/tape.hpp"
#include "l2o/tensor.hpp"

namespace l2o {

// One LSTM layer, gate order [input | forget | candidate | output] along the
// columns of the fused weight matrices.
struct LstmLayerParams {
  Tensor wx;  // in x 4H
  Tensor wh;  // H x 4H
  Tensor b;   // 4H
};

// Shared weights of the coordinatewise optimizer. `rank` is the DMD feature
// rank R; rank 0 disables the eigenvalue inputs and reproduces the plain
// gradient-only optimizer with input width 2.
struct LstmOptimizerParams {
  LstmLayerParams layer1;
  LstmLayerParams layer2;
  Tensor head_w;  // H x 1
  Tensor head_b;  // 1
  double output_scale = 0.1;
  double preprocess_p = 10.0;
  int hidden = 20;
  int rank = 1;

  int input_width() const { return 2 + 2 * rank; }
};

LstmOptimizerParams init_params(uint64_t seed, int rank, int hidden = 20);

// Per-coordinate recurrent state, one row per optimizee coordinate.
struct CoordStates {
  Tensor h1, c1, h2, c2;  // each n x H
};
CoordStates zero_states(int coords, int hidden);

// The two-column gradient encoding: (ln|g|/p, sign g) for large entries and
// (-1, e^p g) for small ones. Output is plain data, never on a tape.
Tensor preprocess_gradient(const Tensor& grad, double p);

struct OptimizerInput {
  Tensor grad_features;             // n x 2
  std::vector<double> dmd_features; // 2R, broadcast to every row
};

// Tape bindings: weights and states entered as leaves of the current tape so
// meta-gradients can reach them.
struct BoundParams {
  NodeId wx1, wh1, b1, wx2, wh2, b2, head_w, head_b;
};
BoundParams bind_params(Tape& tape, const LstmOptimizerParams& params);

struct BoundStates {
  NodeId h1, c1, h2, c2;
};
BoundStates bind_states(Tape& tape, const CoordStates& states);

struct StepResult {
  NodeId update;  // n-vector on the tape
  BoundStates states;
};

// One coordinatewise optimizer step. The input features are entered as a
// detached leaf; the update and the new states stay differentiable with
// respect to the bound weights and incoming states.
StepResult optimizer_step(Tape& tape, const BoundParams& params,
                          const LstmOptimizerParams& meta, const OptimizerInput& input,
                          const BoundStates& states);

CoordStates read_states(const Tape& tape, const BoundStates& states);

// Flat views of phi for the meta-optimizer. Tensor order is fixed:
// wx1, wh1, b1, wx2, wh2, b2, head_w, head_b.
int64_t param_count(const LstmOptimizerParams& p);
Tensor flatten_params(const LstmOptimizerParams& p);
void unflatten_params(const Tensor& flat, LstmOptimizerParams& p);
Tensor gather_param_grads(const GradientMap& gm, const Tape& tape, const BoundParams& bound);

// Serialized optimizer: phi plus the DMD window size it was trained with.
struct Checkpoint {
  LstmOptimizerParams params;
  int snapshots_m = 100;
  double score = 0.0;
  int epoch = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace l2o

#endif  // L2O_LSTM_OPTIMIZER_HPP
