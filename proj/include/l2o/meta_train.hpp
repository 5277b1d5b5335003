#ifndef L2O_META_TRAIN_HPP
#define L2O_META_TRAIN_HPP

#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "l2o/classic.hpp"
#include "l2o/lstm_optimizer.hpp"
#include "l2o/optimizee.hpp"

namespace l2o {

struct MetaTrainConfig {
  int inner_steps = 100;   // T, optimizee steps per epoch
  int outer_epochs = 1000; // N
  int unroll = 20;         // u, meta-update period (truncated BPTT window)
  double meta_lr = 1e-3;   // alpha
  std::vector<double> unroll_weights;  // empty means all ones
  int rank = 1;       // R; 0 trains the gradient-only optimizer
  int snapshots = 100; // m
  int eval_every = 20;
  int eval_instances = 20;
  uint64_t seed = 0;
  bool meta_sgd = false;  // literal SGD meta-updates instead of Adam

  void validate() const;
};

struct TrajectoryRecord {
  int step;
  double loss;
  double update_norm;
  std::vector<double> dmd;  // 2R feature values logged at this step
};

struct TrajectoryLog {
  std::vector<TrajectoryRecord> records;
  bool aborted = false;
};

// Weighted sum of the unrolled losses, on the tape.
NodeId unroll_loss(Tape& tape, const std::vector<NodeId>& losses,
                   const std::vector<double>& weights);

struct InnerHooks {
  // Called once per meta-update with the window index, the unrolled loss
  // value and the flat gradient with respect to phi (before the update).
  std::function<void(int window, double loss, const Tensor& grad)> on_meta_update;
  // Diagnostic scaling of a whole window's loss weights (e.g. zeroing one
  // window to verify truncation); identity when absent.
  std::function<double(int window)> window_scale;
  // Inspection/override of the optimizer inputs right before each step.
  // Freezing them across replays makes the detachment boundary explicit in
  // finite-difference checks of the meta-gradient.
  std::function<void(int step, OptimizerInput& input)> input_override;
};

struct InnerResult {
  TrajectoryLog log;
  int meta_updates = 0;
  bool aborted = false;
};

// One epoch of Algorithm-style inner training: T optimizee steps with a
// meta-update every u steps (and after a trailing partial window). phi and
// the meta-optimizer state are updated in place.
InnerResult train_inner(const MetaTrainConfig& cfg, Optimizee& task, LstmOptimizerParams& phi,
                        AdamState& meta_state, const InnerHooks* hooks = nullptr);

// ---- evaluation --------------------------------------------------------

// A per-run update rule: maps the current gradient (plus DMD features when
// the policy requests them) to an additive parameter update.
class UpdatePolicy {
 public:
  virtual ~UpdatePolicy() = default;
  virtual int dmd_rank() const { return 0; }
  virtual int dmd_snapshots() const { return 0; }
  virtual Tensor update(const Tensor& grad, const std::vector<double>& dmd_features) = 0;
};

using PolicyFactory = std::function<std::unique_ptr<UpdatePolicy>()>;

std::unique_ptr<UpdatePolicy> make_lstm_policy(const LstmOptimizerParams& params,
                                               int snapshots_m);
std::unique_ptr<UpdatePolicy> make_adam_policy(const AdamConfig& cfg);
std::unique_ptr<UpdatePolicy> make_sgd_policy(double lr);

struct RunMetrics {
  double last10_sum = 0.0;
  double loss_at_300 = 0.0;  // loss at step min(300, steps)
  bool diverged = false;
};

struct EvalStats {
  int steps = 0;
  int runs = 0;
  int divergences = 0;
  std::vector<RunMetrics> per_run;
  std::vector<double> mean_curve;  // per step, over non-diverged runs
  std::vector<double> std_curve;
  double last10_mean = std::numeric_limits<double>::quiet_NaN();
  double last10_std = 0.0;
  double loss300_mean = std::numeric_limits<double>::quiet_NaN();
  double loss300_std = 0.0;
};

struct EvalOptions {
  int steps = 1000;
  int runs = 30;
  uint64_t seed = 0;
  int jobs = 1;
};

// Independent optimizee trainings under a frozen update policy. Runs fan out
// over `jobs` threads; results are aggregated by run index so the output is
// identical for any job count. `first_log`, when given, receives the full
// trajectory of run 0.
EvalStats evaluate_policy(const PolicyFactory& factory, const OptimizeeFamily& family,
                          const EvalOptions& opts, TrajectoryLog* first_log = nullptr);

EvalStats evaluate_optimizer(const Checkpoint& ckpt, const OptimizeeFamily& family,
                             const EvalOptions& opts, TrajectoryLog* first_log = nullptr);

// Checkpoint-selection score: mean over eval_instances fresh instances of the
// summed last-10 losses at the training horizon T. Lower is better; +inf if
// every run diverged.
double checkpoint_score(const LstmOptimizerParams& phi, int snapshots_m,
                        const OptimizeeFamily& eval_family, const MetaTrainConfig& cfg);

// ---- outer loop --------------------------------------------------------

struct MetaTrainResult {
  Checkpoint best;
  std::vector<std::pair<int, double>> epoch_scores;
  int aborted_epochs = 0;
};

using ProgressFn = std::function<void(int epoch, double score)>;  // score NaN between evals

MetaTrainResult meta_train(const MetaTrainConfig& cfg, const OptimizeeFamily& train_family,
                           const OptimizeeFamily& eval_family,
                           const ProgressFn& progress = nullptr);

}  // namespace l2o

#endif  // L2O_META_TRAIN_HPP
