#include "l2o/meta_train.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

#include "l2o/dmd.hpp"
#include "l2o/errors.hpp"
#include "l2o/rng.hpp"

namespace l2o {

void MetaTrainConfig::validate() const {
  if (inner_steps < 1) throw contract_error("meta train: T must be >= 1");
  if (outer_epochs < 1) throw contract_error("meta train: N must be >= 1");
  if (unroll < 1) throw contract_error("meta train: unroll must be >= 1");
  if (rank < 0) throw contract_error("meta train: R must be >= 0");
  if (rank > 0 && snapshots < rank)
    throw contract_error("meta train: R=" + std::to_string(rank) + " exceeds m=" +
                         std::to_string(snapshots));
  if (eval_every < 1) throw contract_error("meta train: eval_every must be >= 1");
  if (eval_instances < 1) throw contract_error("meta train: eval_instances must be >= 1");
  if (!unroll_weights.empty() && static_cast<int>(unroll_weights.size()) < unroll)
    throw contract_error("meta train: " + std::to_string(unroll_weights.size()) +
                         " unroll weights for unroll " + std::to_string(unroll));
}

NodeId unroll_loss(Tape& tape, const std::vector<NodeId>& losses,
                   const std::vector<double>& weights) {
  if (losses.empty()) throw contract_error("unroll_loss: empty loss window");
  if (weights.size() < losses.size())
    throw contract_error("unroll_loss: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(losses.size()) + " losses");
  NodeId acc = tape.scale(losses[0], weights[0]);
  for (size_t i = 1; i < losses.size(); ++i)
    acc = tape.add(acc, tape.scale(losses[i], weights[i]));
  return acc;
}

InnerResult train_inner(const MetaTrainConfig& cfg, Optimizee& task, LstmOptimizerParams& phi,
                        AdamState& meta_state, const InnerHooks* hooks) {
  cfg.validate();
  if (phi.rank != cfg.rank)
    throw contract_error("train_inner: phi has R=" + std::to_string(phi.rank) +
                         " but config says R=" + std::to_string(cfg.rank));

  const int n = task.dim();
  const int rank = cfg.rank;
  InnerResult res;

  Tensor theta_vals = task.initial_theta();
  CoordStates state_vals = zero_states(n, phi.hidden);
  std::optional<SnapshotWindow> window;
  std::optional<DmdConfig> dmd_cfg;
  if (rank > 0) {
    dmd_cfg.emplace(rank, cfg.snapshots);
    window.emplace(n + 1, cfg.snapshots);
  }

  Tape tape;
  BoundParams phi_nodes = bind_params(tape, phi);
  BoundStates states = bind_states(tape, state_vals);
  NodeId theta = tape.leaf(theta_vals);

  std::vector<NodeId> window_losses;
  window_losses.reserve(cfg.unroll);
  int window_index = 0;

  for (int t = 1; t <= cfg.inner_steps; ++t) {
    const NodeId loss_node = task.loss(tape, theta);
    const double loss = tape.scalar_value(loss_node);
    if (!std::isfinite(loss)) {
      res.aborted = true;
      res.log.aborted = true;
      break;
    }
    window_losses.push_back(loss_node);

    std::vector<double> features(static_cast<size_t>(2 * rank), 0.0);
    if (rank > 0) {
      window->push(tape.value(theta).data, loss);
      if (window->ready()) features = dmd_eigenvalues(*window, *dmd_cfg).values;
    }

    // Inner gradient: swept only over this step's loss subgraph, read at the
    // theta node, and fed to the optimizer detached.
    const GradientMap inner = tape.backward(loss_node, theta);
    const Tensor grad = inner.grad(tape, theta);
    OptimizerInput input{preprocess_gradient(grad, phi.preprocess_p), features};
    if (hooks && hooks->input_override) hooks->input_override(t, input);
    const StepResult step = optimizer_step(tape, phi_nodes, phi, input, states);
    const NodeId theta_next = tape.add(theta, step.update);

    res.log.records.push_back({t, loss, l2_norm(tape.value(step.update)), std::move(features)});

    theta = theta_next;
    states = step.states;

    if (t % cfg.unroll == 0 || t == cfg.inner_steps) {
      std::vector<double> w(window_losses.size(), 1.0);
      if (!cfg.unroll_weights.empty())
        for (size_t i = 0; i < w.size(); ++i) w[i] = cfg.unroll_weights[i];
      if (hooks && hooks->window_scale) {
        const double s = hooks->window_scale(window_index);
        for (double& wi : w) wi *= s;
      }
      const NodeId meta_loss = unroll_loss(tape, window_losses, w);
      const GradientMap gm = tape.backward(meta_loss);
      const Tensor meta_grad = gather_param_grads(gm, tape, phi_nodes);
      if (hooks && hooks->on_meta_update)
        hooks->on_meta_update(window_index, tape.scalar_value(meta_loss), meta_grad);

      Tensor flat = flatten_params(phi);
      if (cfg.meta_sgd) {
        flat = sgd_step(flat, meta_grad, cfg.meta_lr);
      } else {
        auto [next_flat, next_state] = adam_step(meta_state, flat, meta_grad);
        flat = std::move(next_flat);
        meta_state = std::move(next_state);
      }
      unflatten_params(flat, phi);
      ++res.meta_updates;
      ++window_index;

      // Truncation boundary: theta and the recurrent states cross over as
      // plain numbers on a fresh tape bound to the updated phi.
      theta_vals = tape.value(theta);
      state_vals = read_states(tape, states);
      tape.clear();
      phi_nodes = bind_params(tape, phi);
      states = bind_states(tape, state_vals);
      theta = tape.leaf(theta_vals);
      window_losses.clear();
    }
  }
  return res;
}

// ---- policies ------------------------------------------------------------

namespace {

class LstmPolicy final : public UpdatePolicy {
 public:
  LstmPolicy(LstmOptimizerParams params, int snapshots_m)
      : params_(std::move(params)), snapshots_(snapshots_m) {}
  int dmd_rank() const override { return params_.rank; }
  int dmd_snapshots() const override { return snapshots_; }

  Tensor update(const Tensor& grad, const std::vector<double>& features) override {
    const int n = static_cast<int>(grad.numel());
    if (!initialized_) {
      states_ = zero_states(n, params_.hidden);
      initialized_ = true;
    }
    Tape tape;
    const BoundParams bound = bind_params(tape, params_);
    const BoundStates bs = bind_states(tape, states_);
    OptimizerInput input{preprocess_gradient(grad, params_.preprocess_p), features};
    const StepResult step = optimizer_step(tape, bound, params_, input, bs);
    states_ = read_states(tape, step.states);
    return tape.value(step.update);
  }

 private:
  LstmOptimizerParams params_;
  int snapshots_;
  CoordStates states_;
  bool initialized_ = false;
};

class AdamPolicy final : public UpdatePolicy {
 public:
  explicit AdamPolicy(const AdamConfig& cfg) : cfg_(cfg) {}
  Tensor update(const Tensor& grad, const std::vector<double>&) override {
    if (!initialized_) {
      state_ = make_adam(grad, cfg_);
      initialized_ = true;
    }
    // Stepping from zero parameters yields the additive update directly.
    auto [delta, next] = adam_step(state_, Tensor::zeros(grad.shape), grad);
    state_ = std::move(next);
    return delta;
  }

 private:
  AdamConfig cfg_;
  AdamState state_;
  bool initialized_ = false;
};

class SgdPolicy final : public UpdatePolicy {
 public:
  explicit SgdPolicy(double lr) : lr_(lr) {}
  Tensor update(const Tensor& grad, const std::vector<double>&) override {
    Tensor delta = Tensor::zeros(grad.shape);
    for (size_t i = 0; i < delta.data.size(); ++i) delta.data[i] = -lr_ * grad.data[i];
    return delta;
  }

 private:
  double lr_;
};

}  // namespace

std::unique_ptr<UpdatePolicy> make_lstm_policy(const LstmOptimizerParams& params, int snapshots_m) {
  return std::make_unique<LstmPolicy>(params, snapshots_m);
}
std::unique_ptr<UpdatePolicy> make_adam_policy(const AdamConfig& cfg) {
  return std::make_unique<AdamPolicy>(cfg);
}
std::unique_ptr<UpdatePolicy> make_sgd_policy(double lr) {
  return std::make_unique<SgdPolicy>(lr);
}

// ---- evaluation ------------------------------------------------------------

namespace {

struct RunOutcome {
  std::vector<double> losses;
  bool diverged = false;
};

RunOutcome run_training(Optimizee& task, UpdatePolicy& policy, int steps, TrajectoryLog* log) {
  const int n = task.dim();
  Tensor theta = task.initial_theta();
  const int rank = policy.dmd_rank();
  std::optional<SnapshotWindow> window;
  std::optional<DmdConfig> dmd_cfg;
  if (rank > 0) {
    dmd_cfg.emplace(rank, policy.dmd_snapshots());
    window.emplace(n + 1, policy.dmd_snapshots());
  }

  RunOutcome out;
  out.losses.reserve(steps);
  for (int t = 1; t <= steps; ++t) {
    Tape tape;
    const NodeId theta_node = tape.leaf(theta);
    const NodeId loss_node = task.loss(tape, theta_node);
    const double loss = tape.scalar_value(loss_node);
    if (!std::isfinite(loss)) {
      out.diverged = true;
      if (log) log->aborted = true;
      break;
    }
    out.losses.push_back(loss);

    std::vector<double> features(static_cast<size_t>(2 * rank), 0.0);
    if (rank > 0) {
      window->push(theta.data, loss);
      if (window->ready()) features = dmd_eigenvalues(*window, *dmd_cfg).values;
    }

    const GradientMap gm = tape.backward(loss_node, theta_node);
    const Tensor grad = gm.grad(tape, theta_node);
    const Tensor delta = policy.update(grad, features);
    for (size_t i = 0; i < theta.data.size(); ++i) theta.data[i] += delta.data[i];
    if (log) log->records.push_back({t, loss, l2_norm(delta), std::move(features)});
  }
  return out;
}

void mean_std(const std::vector<double>& xs, double& mean, double& stddev) {
  mean = std::numeric_limits<double>::quiet_NaN();
  stddev = 0.0;
  if (xs.empty()) return;
  double s = 0.0;
  for (double x : xs) s += x;
  mean = s / static_cast<double>(xs.size());
  if (xs.size() < 2) return;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

}  // namespace

EvalStats evaluate_policy(const PolicyFactory& factory, const OptimizeeFamily& family,
                          const EvalOptions& opts, TrajectoryLog* first_log) {
  if (opts.runs < 1) throw contract_error("evaluate: runs must be >= 1");
  if (opts.steps < 1) throw contract_error("evaluate: steps must be >= 1");

  std::vector<RunOutcome> outcomes(opts.runs);
  auto work = [&](int r) {
    auto task = family.instance(derive_seed(opts.seed, static_cast<uint64_t>(r)));
    auto policy = factory();
    outcomes[r] = run_training(*task, *policy, opts.steps, r == 0 ? first_log : nullptr);
  };

  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    for (int r = 0; r < opts.runs; ++r) work(r);
  } else {
    std::atomic<int> next{0};
    std::atomic<bool> bail{false};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < opts.runs && !bail.load(); r = next.fetch_add(1)) {
          try {
            work(r);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
            bail.store(true);
          }
        }
      });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
  }

  EvalStats stats;
  stats.steps = opts.steps;
  stats.runs = opts.runs;
  stats.per_run.resize(opts.runs);
  const int at300 = std::min(300, opts.steps);
  std::vector<double> last10s, loss300s;
  for (int r = 0; r < opts.runs; ++r) {
    RunMetrics& m = stats.per_run[r];
    const RunOutcome& o = outcomes[r];
    m.diverged = o.diverged;
    if (o.diverged) {
      ++stats.divergences;
      continue;
    }
    double sum10 = 0.0;
    const int tail = std::min<int>(10, static_cast<int>(o.losses.size()));
    for (int i = 0; i < tail; ++i) sum10 += o.losses[o.losses.size() - 1 - i];
    m.last10_sum = sum10;
    m.loss_at_300 = o.losses[at300 - 1];
    last10s.push_back(m.last10_sum);
    loss300s.push_back(m.loss_at_300);
  }
  mean_std(last10s, stats.last10_mean, stats.last10_std);
  mean_std(loss300s, stats.loss300_mean, stats.loss300_std);

  stats.mean_curve.assign(opts.steps, std::numeric_limits<double>::quiet_NaN());
  stats.std_curve.assign(opts.steps, 0.0);
  std::vector<double> column;
  column.reserve(opts.runs);
  for (int t = 0; t < opts.steps; ++t) {
    column.clear();
    for (const auto& o : outcomes)
      if (!o.diverged) column.push_back(o.losses[t]);
    mean_std(column, stats.mean_curve[t], stats.std_curve[t]);
  }
  return stats;
}

EvalStats evaluate_optimizer(const Checkpoint& ckpt, const OptimizeeFamily& family,
                             const EvalOptions& opts, TrajectoryLog* first_log) {
  const PolicyFactory factory = [&ckpt] {
    return make_lstm_policy(ckpt.params, ckpt.snapshots_m);
  };
  return evaluate_policy(factory, family, opts, first_log);
}

double checkpoint_score(const LstmOptimizerParams& phi, int snapshots_m,
                        const OptimizeeFamily& eval_family, const MetaTrainConfig& cfg) {
  EvalOptions opts;
  opts.steps = cfg.inner_steps;
  opts.runs = cfg.eval_instances;
  opts.seed = derive_seed(cfg.seed, 0xEEEEull);
  opts.jobs = 1;
  const PolicyFactory factory = [&] { return make_lstm_policy(phi, snapshots_m); };
  const EvalStats stats = evaluate_policy(factory, eval_family, opts);
  if (stats.divergences == stats.runs) return std::numeric_limits<double>::infinity();
  return stats.last10_mean;
}

MetaTrainResult meta_train(const MetaTrainConfig& cfg, const OptimizeeFamily& train_family,
                           const OptimizeeFamily& eval_family, const ProgressFn& progress) {
  cfg.validate();
  LstmOptimizerParams phi = init_params(derive_seed(cfg.seed, 0x700ull), cfg.rank);
  AdamConfig meta_cfg;
  meta_cfg.lr = cfg.meta_lr;
  AdamState meta_state = make_adam(flatten_params(phi), meta_cfg);

  MetaTrainResult out;
  out.best.score = std::numeric_limits<double>::infinity();
  bool have_best = false;

  for (int epoch = 1; epoch <= cfg.outer_epochs; ++epoch) {
    auto task = train_family.instance(derive_seed(cfg.seed, 0x10000ull + epoch));
    const InnerResult inner = train_inner(cfg, *task, phi, meta_state);
    if (inner.aborted) ++out.aborted_epochs;

    if (epoch % cfg.eval_every == 0) {
      const double score = checkpoint_score(phi, cfg.snapshots, eval_family, cfg);
      out.epoch_scores.emplace_back(epoch, score);
      if (!have_best || score < out.best.score) {
        out.best = Checkpoint{phi, cfg.snapshots, score, epoch};
        have_best = true;
      }
      if (progress) progress(epoch, score);
    } else if (progress) {
      progress(epoch, std::numeric_limits<double>::quiet_NaN());
    }
  }

  if (!have_best) {
    // N < eval_every: score the final parameters so a checkpoint exists.
    const double score = checkpoint_score(phi, cfg.snapshots, eval_family, cfg);
    out.epoch_scores.emplace_back(cfg.outer_epochs, score);
    out.best = Checkpoint{phi, cfg.snapshots, score, cfg.outer_epochs};
  }
  return out;
}

}  // namespace l2o
