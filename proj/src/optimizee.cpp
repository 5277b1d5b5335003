#include "l2o/optimizee.hpp"

#include <cmath>

#include "l2o/errors.hpp"
#include "l2o/rng.hpp"

namespace l2o {

QuadraticTask sample_quadratic(uint64_t seed, int k) {
  if (k < 1) throw contract_error("sample_quadratic: k must be >= 1");
  Rng rng(derive_seed(seed, 0x51));
  QuadraticTask task;
  task.k = k;
  task.w = random_normal({k, k}, 0.0, 1.0, rng);
  task.y = random_normal({k}, 0.0, 1.0, rng);
  return task;
}

NodeId quadratic_loss(Tape& tape, const QuadraticTask& task, NodeId theta) {
  if (tape.value(theta).numel() != task.k)
    throw contract_error("quadratic_loss: theta length " +
                         std::to_string(tape.value(theta).numel()) + " != k " +
                         std::to_string(task.k));
  const NodeId w = tape.leaf(task.w);
  const NodeId y = tape.leaf(Tensor({task.k, 1}, task.y.data));
  const NodeId col = tape.reshape(theta, {task.k, 1});
  const NodeId resid = tape.sub(tape.matmul(w, col), y);
  return tape.sum(tape.mul(resid, resid));
}

Tensor quadratic_init_theta(const QuadraticTask& task, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x52));
  return random_normal({task.k}, 0.0, 1.0, rng);
}

int64_t mlp_param_count(const MlpTask& task) {
  if (task.layer_sizes.size() < 2)
    throw contract_error("mlp: need at least input and output layer sizes");
  int64_t n = 0;
  for (size_t l = 0; l + 1 < task.layer_sizes.size(); ++l)
    n += static_cast<int64_t>(task.layer_sizes[l]) * task.layer_sizes[l + 1] +
         task.layer_sizes[l + 1];
  return n;
}

NodeId mlp_forward_loss(Tape& tape, const MlpTask& task, NodeId theta,
                        const BatchSampler::Batch& batch) {
  const int64_t want = mlp_param_count(task);
  if (tape.value(theta).numel() != want)
    throw contract_error("mlp_forward_loss: theta length " +
                         std::to_string(tape.value(theta).numel()) + " != parameter count " +
                         std::to_string(want));
  if (batch.images.cols() != task.layer_sizes.front())
    throw contract_error("mlp_forward_loss: batch width " + std::to_string(batch.images.cols()) +
                         " != input size " + std::to_string(task.layer_sizes.front()));

  NodeId act = tape.leaf(batch.images);
  int offset = 0;
  for (size_t l = 0; l + 1 < task.layer_sizes.size(); ++l) {
    const int in = task.layer_sizes[l];
    const int out = task.layer_sizes[l + 1];
    const NodeId w = tape.reshape(tape.slice(theta, offset, in * out), {in, out});
    offset += in * out;
    const NodeId b = tape.slice(theta, offset, out);
    offset += out;
    act = tape.bias_add(tape.matmul(act, w), b);
    const bool last = l + 2 == task.layer_sizes.size();
    if (!last) act = task.activation == Activation::sigmoid ? tape.sigmoid(act) : tape.relu(act);
  }
  return tape.softmax_cross_entropy(act, batch.labels);
}

Tensor mlp_init_theta(const MlpTask& task, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x53));
  Tensor theta({static_cast<int>(mlp_param_count(task))});
  size_t at = 0;
  for (size_t l = 0; l + 1 < task.layer_sizes.size(); ++l) {
    const int in = task.layer_sizes[l];
    const int out = task.layer_sizes[l + 1];
    const double stddev = 1.0 / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < in * out; ++i) theta.data[at++] = rng.normal(0.0, stddev);
    at += static_cast<size_t>(out);  // biases stay zero
  }
  return theta;
}

namespace {

class QuadraticOptimizee : public Optimizee {
 public:
  QuadraticOptimizee(QuadraticTask task, uint64_t theta_seed)
      : task_(std::move(task)), theta_seed_(theta_seed) {}
  int dim() const override { return task_.k; }
  Tensor initial_theta() override { return quadratic_init_theta(task_, theta_seed_); }
  NodeId loss(Tape& tape, NodeId theta) override { return quadratic_loss(tape, task_, theta); }

 private:
  QuadraticTask task_;
  uint64_t theta_seed_;
};

class MlpOptimizee : public Optimizee {
 public:
  MlpOptimizee(const MlpTask& task, const LabeledDataset* data, uint64_t seed)
      : task_(task),
        sampler_(*data, task.batch_size, derive_seed(seed, 0x61)),
        theta_seed_(derive_seed(seed, 0x62)) {}
  int dim() const override { return static_cast<int>(mlp_param_count(task_)); }
  Tensor initial_theta() override { return mlp_init_theta(task_, theta_seed_); }
  NodeId loss(Tape& tape, NodeId theta) override {
    return mlp_forward_loss(tape, task_, theta, sampler_.next());
  }

 private:
  MlpTask task_;
  BatchSampler sampler_;
  uint64_t theta_seed_;
};

}  // namespace

std::unique_ptr<Optimizee> QuadraticFamily::instance(uint64_t seed) const {
  return std::make_unique<QuadraticOptimizee>(sample_quadratic(seed, k_), derive_seed(seed, 0x5));
}

std::unique_ptr<Optimizee> MlpFamily::instance(uint64_t seed) const {
  if (data_ == nullptr || data_->size() == 0)
    throw contract_error("mlp family " + name_ + ": no dataset attached");
  return std::make_unique<MlpOptimizee>(task_, data_, seed);
}

}  // namespace l2o
