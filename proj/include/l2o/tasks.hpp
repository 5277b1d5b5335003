#ifndef L2O_TASKS_HPP
#define L2O_TASKS_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "l2o/datasets.hpp"
#include "l2o/optimizee.hpp"

namespace l2o {

struct TaskSpec {
  std::string name;
  std::string dataset;           // "mnist", "fashion-mnist", "cifar10", or "" for quadratic
  std::vector<int> layer_sizes;  // empty for quadratic
  Activation activation = Activation::sigmoid;
  int batch_size = 128;
  int quadratic_dim = 0;  // nonzero marks the quadratic family

  bool is_quadratic() const { return quadratic_dim > 0; }
};

// The benchmark registry, in a fixed order.
const std::vector<TaskSpec>& task_registry();
const TaskSpec* find_task(const std::string& name);
std::string task_names_joined();

// Loads datasets lazily and caches them per (dataset, split); families built
// from it stay valid for the provider's lifetime. `subset` (if > 0) keeps
// only the first n examples of the train split.
class TaskProvider {
 public:
  TaskProvider(std::string data_dir, int train_subset = 0);

  enum class Split { train, test };
  const LabeledDataset& dataset(const std::string& name, Split split);

  std::unique_ptr<OptimizeeFamily> family(const TaskSpec& spec, Split split);

 private:
  std::string data_dir_;
  int train_subset_;
  std::map<std::string, LabeledDataset> cache_;
  std::string resolve(const std::string& relative) const;
};

}  // namespace l2o

#endif  // L2O_TASKS_HPP
