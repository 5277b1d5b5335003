#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "l2o/classic.hpp"
#include "l2o/rng.hpp"

using namespace l2o;

TEST_CASE("first Adam step moves by roughly lr in the gradient direction") {
  // theta = 1, f = theta^2, g = 2: bias correction gives
  // delta = lr * g / (|g| + eps) ~= lr.
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st = make_adam(Tensor::scalar(1.0), cfg);
  const Tensor theta = Tensor::scalar(1.0);
  const Tensor grad = Tensor::scalar(2.0);
  auto [next, st2] = adam_step(st, theta, grad);
  CHECK(next.data[0] == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(st2.t == 1);
}

TEST_CASE("zero gradients leave parameters untouched forever") {
  AdamConfig cfg;
  AdamState st = make_adam(Tensor::zeros({4}), cfg);
  Tensor theta({4}, {1.0, -2.0, 3.0, 0.5});
  const Tensor zero = Tensor::zeros({4});
  for (int k = 0; k < 25; ++k) {
    auto [next, st2] = adam_step(st, theta, zero);
    theta = next;
    st = st2;
  }
  CHECK(theta.data == std::vector<double>{1.0, -2.0, 3.0, 0.5});
}

namespace {

// Textbook Adam recurrence, scalar per coordinate, written independently of
// the library implementation.
struct RefAdam {
  double lr, b1, b2, eps;
  std::vector<double> m, v;
  long t = 0;
  void step(std::vector<double>& params, const std::vector<double>& grads) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * grads[i];
      v[i] = b2 * v[i] + (1 - b2) * grads[i] * grads[i];
      const double mhat = m[i] / (1 - std::pow(b1, t));
      const double vhat = v[i] / (1 - std::pow(b2, t));
      params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

}  // namespace

TEST_CASE("Adam matches an independent textbook implementation for 100 steps") {
  Rng rng(2024);
  AdamConfig cfg;
  cfg.lr = 0.003;
  AdamState st = make_adam(Tensor::zeros({6}), cfg);
  Tensor theta = random_uniform({6}, -1.0, 1.0, rng);
  RefAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, {}, {}, 0};
  std::vector<double> ref_theta = theta.data;
  for (int k = 0; k < 100; ++k) {
    Tensor grads = random_uniform({6}, -2.0, 2.0, rng);
    auto [next, st2] = adam_step(st, theta, grads);
    theta = next;
    st = st2;
    ref.step(ref_theta, grads.data);
  }
  for (int i = 0; i < 6; ++i)
    CHECK(theta.data[i] == doctest::Approx(ref_theta[i]).epsilon(1e-12));
}

TEST_CASE("Adam update magnitude is bounded by roughly the learning rate") {
  Rng rng(9);
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st = make_adam(Tensor::zeros({8}), cfg);
  Tensor theta = Tensor::zeros({8});
  // The bias-corrected ratio mhat/sqrt(vhat) is bounded by
  // (1-b1^t)^-1-ish early on; 1.2 * lr covers the worst case here.
  for (int k = 0; k < 50; ++k) {
    Tensor grads = random_uniform({8}, -5.0, 5.0, rng);
    auto [next, st2] = adam_step(st, theta, grads);
    for (int i = 0; i < 8; ++i) CHECK(std::abs(next.data[i] - theta.data[i]) <= 1.2 * cfg.lr);
    theta = next;
    st = st2;
  }
}

TEST_CASE("Adam drives a 10-d positive definite quadratic below 1e-3") {
  // L(theta) = sum lambda_i theta_i^2 with spread eigenvalues; gradient
  // 2 lambda_i theta_i. Deterministic sanity bound used by the acceptance
  // suite as well.
  const int k = 10;
  std::vector<double> lambda(k), theta(k);
  Rng rng(5);
  for (int i = 0; i < k; ++i) {
    lambda[i] = rng.uniform(0.2, 5.0);
    theta[i] = rng.uniform(-2.0, 2.0);
  }
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState st = make_adam(Tensor::zeros({k}), cfg);
  Tensor params({k}, theta);
  double loss = 0.0;
  for (int step = 0; step < 1000; ++step) {
    Tensor grads({k});
    loss = 0.0;
    for (int i = 0; i < k; ++i) {
      loss += lambda[i] * params.data[i] * params.data[i];
      grads.data[i] = 2.0 * lambda[i] * params.data[i];
    }
    if (loss < 1e-3) break;
    auto [next, st2] = adam_step(st, params, grads);
    params = next;
    st = st2;
  }
  CHECK(loss < 1e-3);
}

TEST_CASE("sgd examples") {
  CHECK(sgd_step(Tensor::scalar(2.0), Tensor::scalar(1.0), 0.5).data[0] ==
        doctest::Approx(1.5).epsilon(1e-15));
  const Tensor same = sgd_step(Tensor::scalar(2.0), Tensor::scalar(123.0), 0.0);
  CHECK(same.data[0] == 2.0);
}

TEST_CASE("sgd on the squared norm decays geometrically") {
  // theta_{t+1} = theta_t - lr * 2 theta_t = (1 - 2 lr) theta_t.
  Tensor theta({3}, {1.0, -2.0, 0.5});
  const double lr = 0.1;
  for (int step = 0; step < 5; ++step) {
    Tensor grads({3});
    for (int i = 0; i < 3; ++i) grads.data[i] = 2.0 * theta.data[i];
    theta = sgd_step(theta, grads, lr);
  }
  const double factor = std::pow(0.8, 5);
  CHECK(theta.data[0] == doctest::Approx(1.0 * factor).epsilon(1e-12));
  CHECK(theta.data[1] == doctest::Approx(-2.0 * factor).epsilon(1e-12));
  CHECK(theta.data[2] == doctest::Approx(0.5 * factor).epsilon(1e-12));
}
