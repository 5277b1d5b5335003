#include "l2o/classic.hpp"

#include <cmath>

#include "l2o/errors.hpp"

namespace l2o {

AdamState make_adam(const Tensor& params_like, const AdamConfig& cfg) {
  AdamState st;
  st.m = Tensor::zeros(params_like.shape);
  st.v = Tensor::zeros(params_like.shape);
  st.t = 0;
  st.cfg = cfg;
  return st;
}

std::pair<Tensor, AdamState> adam_step(const AdamState& state, const Tensor& params,
                                       const Tensor& grads) {
  if (!same_shape(params, grads) || !same_shape(params, state.m))
    throw dim_error("adam_step: shape mismatch " + params.shape_str() + " vs " +
                    grads.shape_str());
  AdamState next = state;
  next.t = state.t + 1;
  Tensor out = params;
  const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(next.t));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(next.t));
  for (size_t i = 0; i < out.data.size(); ++i) {
    const double g = grads.data[i];
    next.m.data[i] = b1 * state.m.data[i] + (1.0 - b1) * g;
    next.v.data[i] = b2 * state.v.data[i] + (1.0 - b2) * g * g;
    const double mhat = next.m.data[i] / corr1;
    const double vhat = next.v.data[i] / corr2;
    out.data[i] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
  }
  return {std::move(out), std::move(next)};
}

Tensor sgd_step(const Tensor& params, const Tensor& grads, double lr) {
  if (!same_shape(params, grads))
    throw dim_error("sgd_step: shape mismatch " + params.shape_str() + " vs " +
                    grads.shape_str());
  Tensor out = params;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= lr * grads.data[i];
  return out;
}

}  // namespace l2o
