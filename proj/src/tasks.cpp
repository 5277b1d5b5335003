#include "l2o/tasks.hpp"

#include <filesystem>

#include "l2o/errors.hpp"

namespace l2o {

namespace fs = std::filesystem;

const std::vector<TaskSpec>& task_registry() {
  static const std::vector<TaskSpec> registry = {
      {"mnist-1l", "mnist", {784, 20, 10}, Activation::sigmoid, 128, 0},
      {"mnist-2l", "mnist", {784, 20, 20, 10}, Activation::sigmoid, 128, 0},
      {"mnist-batch", "mnist", {784, 20, 10}, Activation::sigmoid, 16, 0},
      {"mnist-relu", "mnist", {784, 20, 10}, Activation::relu, 128, 0},
      {"fashion-1l", "fashion-mnist", {784, 20, 10}, Activation::sigmoid, 128, 0},
      {"cifar10-1l", "cifar10", {3072, 20, 10}, Activation::sigmoid, 128, 0},
      {"mnist-train", "mnist", {784, 8, 10}, Activation::sigmoid, 128, 0},
      {"quadratic", "", {}, Activation::sigmoid, 0, 10},
  };
  return registry;
}

const TaskSpec* find_task(const std::string& name) {
  for (const auto& spec : task_registry())
    if (spec.name == name) return &spec;
  return nullptr;
}

std::string task_names_joined() {
  std::string out;
  for (const auto& spec : task_registry()) {
    if (!out.empty()) out += ", ";
    out += spec.name;
  }
  return out;
}

TaskProvider::TaskProvider(std::string data_dir, int train_subset)
    : data_dir_(std::move(data_dir)), train_subset_(train_subset) {}

std::string TaskProvider::resolve(const std::string& relative) const {
  // Accept both <data-dir>/<dataset>/<file> and a flat <data-dir>/<file>
  // layout, each with an optional .gz suffix.
  const fs::path base(data_dir_);
  const fs::path rel(relative);
  const fs::path candidates[] = {base / rel, base / rel.filename()};
  for (const auto& c : candidates) {
    if (fs::exists(c)) return c.string();
    const fs::path gz = c.string() + ".gz";
    if (fs::exists(gz)) return gz.string();
  }
  throw io_error("dataset file not found: " + (base / rel).string() + " (also tried .gz and " +
                 (base / rel.filename()).string() + ")");
}

const LabeledDataset& TaskProvider::dataset(const std::string& name, Split split) {
  const std::string key = name + (split == Split::train ? "/train" : "/test");
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  LabeledDataset data;
  if (name == "mnist" || name == "fashion-mnist") {
    const std::string prefix = (split == Split::train) ? "train" : "t10k";
    data = load_idx(resolve(name + "/" + prefix + "-images-idx3-ubyte"),
                    resolve(name + "/" + prefix + "-labels-idx1-ubyte"));
  } else if (name == "cifar10") {
    std::vector<std::string> paths;
    if (split == Split::train) {
      for (int b = 1; b <= 5; ++b)
        paths.push_back(resolve("cifar-10-batches-bin/data_batch_" + std::to_string(b) + ".bin"));
    } else {
      paths.push_back(resolve("cifar-10-batches-bin/test_batch.bin"));
    }
    data = load_cifar10(paths);
  } else {
    throw contract_error("unknown dataset: " + name);
  }
  if (split == Split::train && train_subset_ > 0) data.truncate(train_subset_);
  return cache_.emplace(key, std::move(data)).first->second;
}

std::unique_ptr<OptimizeeFamily> TaskProvider::family(const TaskSpec& spec, Split split) {
  if (spec.is_quadratic()) return std::make_unique<QuadraticFamily>(spec.quadratic_dim);
  MlpTask task;
  task.layer_sizes = spec.layer_sizes;
  task.activation = spec.activation;
  task.batch_size = spec.batch_size;
  const LabeledDataset& data = dataset(spec.dataset, split);
  if (data.feature_width != spec.layer_sizes.front())
    throw contract_error("task " + spec.name + ": dataset width " +
                         std::to_string(data.feature_width) + " != input size " +
                         std::to_string(spec.layer_sizes.front()));
  return std::make_unique<MlpFamily>(std::move(task), &data, spec.name);
}

}  // namespace l2o
