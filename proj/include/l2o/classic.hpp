#ifndef L2O_CLASSIC_HPP
#define L2O_CLASSIC_HPP

#include <cstdint>
#include <utility>

#include "l2o/tensor.hpp"

namespace l2o {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moments are shaped like the parameters; `t` counts
// completed steps.
struct AdamState {
  Tensor m;
  Tensor v;
  int64_t t = 0;
  AdamConfig cfg;
};

AdamState make_adam(const Tensor& params_like, const AdamConfig& cfg);

std::pair<Tensor, AdamState> adam_step(const AdamState& state, const Tensor& params,
                                       const Tensor& grads);

Tensor sgd_step(const Tensor& params, const Tensor& grads, double lr);

}  // namespace l2o

#endif  // L2O_CLASSIC_HPP
