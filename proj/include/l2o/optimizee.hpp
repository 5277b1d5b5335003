#ifndef L2O_OPTIMIZEE_HPP
#define L2O_OPTIMIZEE_HPP

#include <memory>
#include <string>
#include <vector>

#include "l2o/datasets.hpp"
#include "l2o/tape.hpp"
#include "l2o/tensor.hpp"

namespace l2o {

// L(theta) = ||W theta - y||^2 with W, y drawn i.i.d. standard normal.
struct QuadraticTask {
  Tensor w;  // k x k
  Tensor y;  // k
  int k = 0;
};

QuadraticTask sample_quadratic(uint64_t seed, int k);
NodeId quadratic_loss(Tape& tape, const QuadraticTask& task, NodeId theta);
Tensor quadratic_init_theta(const QuadraticTask& task, uint64_t seed);

enum class Activation { sigmoid, relu };

// MLP classifier over a flattened-image dataset. Parameters live in one flat
// theta vector laid out layer by layer: W1 row-major (in x h1), b1, W2, b2,
// ... up to the 10-logit output layer.
struct MlpTask {
  std::vector<int> layer_sizes;  // input, hidden..., 10
  Activation activation = Activation::sigmoid;
  int batch_size = 128;
};

int64_t mlp_param_count(const MlpTask& task);
NodeId mlp_forward_loss(Tape& tape, const MlpTask& task, NodeId theta,
                        const BatchSampler::Batch& batch);
Tensor mlp_init_theta(const MlpTask& task, uint64_t seed);

// One training problem instance: a loss the optimizer loop can evaluate on a
// tape, with any batch stream owned internally.
class Optimizee {
 public:
  virtual ~Optimizee() = default;
  virtual int dim() const = 0;
  virtual Tensor initial_theta() = 0;
  // Appends the loss subgraph for the current step on top of `theta`.
  // Stochastic tasks consume one fresh batch per call.
  virtual NodeId loss(Tape& tape, NodeId theta) = 0;
};

// A distribution of optimizee instances; `instance(seed)` is deterministic.
class OptimizeeFamily {
 public:
  virtual ~OptimizeeFamily() = default;
  virtual std::unique_ptr<Optimizee> instance(uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

class QuadraticFamily : public OptimizeeFamily {
 public:
  explicit QuadraticFamily(int k) : k_(k) {}
  std::unique_ptr<Optimizee> instance(uint64_t seed) const override;
  std::string name() const override { return "quadratic-k" + std::to_string(k_); }

 private:
  int k_;
};

class MlpFamily : public OptimizeeFamily {
 public:
  MlpFamily(MlpTask task, const LabeledDataset* data, std::string name)
      : task_(std::move(task)), data_(data), name_(std::move(name)) {}
  std::unique_ptr<Optimizee> instance(uint64_t seed) const override;
  std::string name() const override { return name_; }
  const MlpTask& task() const { return task_; }

 private:
  MlpTask task_;
  const LabeledDataset* data_;
  std::string name_;
};

}  // namespace l2o

#endif  // L2O_OPTIMIZEE_HPP
