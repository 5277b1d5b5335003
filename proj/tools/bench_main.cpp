// l2o-bench: meta-train the learned optimizer, evaluate it against classic
// baselines on the benchmark tasks, sweep DMD hyperparameters, and run
// offline DMD analysis of recorded trajectories.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "l2o/dmd.hpp"
#include "l2o/errors.hpp"
#include "l2o/meta_train.hpp"
#include "l2o/reporting.hpp"
#include "l2o/tasks.hpp"

namespace fs = std::filesystem;
using namespace l2o;

namespace {

// Exit codes: 0 success, 2 I/O, 64 usage, 65 data/contract.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommonOpts {
  std::string data_dir = "data";
  std::string out_dir = "out";
  uint64_t seed = 0;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
  cmd->add_option("--data-dir", c.data_dir, "Directory holding the dataset files")
      ->envname("DMD_L2O_DATA_DIR");
  cmd->add_option("--out-dir", c.out_dir, "Directory for CSV/SVG/JSON outputs");
  cmd->add_option("--seed", c.seed, "Base random seed");
  cmd->add_option("--jobs", c.jobs, "Worker threads for evaluation runs");
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir + ": " + ec.message());
}

const TaskSpec& require_task(const std::string& name) {
  const TaskSpec* spec = find_task(name);
  if (!spec)
    throw UsageError("unknown task '" + name + "'; registry: " + task_names_joined());
  return *spec;
}

std::string checkpoint_filename(int rank, int snapshots) {
  return "checkpoint-R" + std::to_string(rank) + "-m" + std::to_string(snapshots) + ".json";
}

std::string optimizer_label(int rank, int snapshots) {
  if (rank == 0) return "L2O";
  return "L2O-DMD(" + std::to_string(rank) + "," + std::to_string(snapshots) + ")";
}

// ---- meta-train ------------------------------------------------------------

struct MetaTrainOpts {
  CommonOpts common;
  std::string task = "mnist-train";
  MetaTrainConfig cfg;
  int subset = 0;
  std::string checkpoint_path;
  std::string scores_path;
};

int cmd_meta_train(const MetaTrainOpts& opt) {
  if (opt.cfg.rank > 0 && opt.cfg.rank > opt.cfg.snapshots)
    throw UsageError("--rank must not exceed --snapshots (got R=" +
                     std::to_string(opt.cfg.rank) + ", m=" + std::to_string(opt.cfg.snapshots) +
                     ")");
  const TaskSpec& spec = require_task(opt.task);
  ensure_out_dir(opt.common.out_dir);

  TaskProvider provider(opt.common.data_dir, opt.subset);
  auto train_family = provider.family(spec, TaskProvider::Split::train);
  auto eval_family = provider.family(spec, TaskProvider::Split::test);

  MetaTrainConfig cfg = opt.cfg;
  cfg.seed = opt.common.seed;

  std::printf("meta-train: task=%s optimizer=%s epochs=%d T=%d u=%d alpha=%g seed=%llu\n",
              spec.name.c_str(), optimizer_label(cfg.rank, cfg.snapshots).c_str(),
              cfg.outer_epochs, cfg.inner_steps, cfg.unroll, cfg.meta_lr,
              static_cast<unsigned long long>(cfg.seed));
  const auto progress = [&](int epoch, double score) {
    if (!std::isnan(score))
      std::printf("  epoch %d: eval score %.6g\n", epoch, score);
    else if (epoch % 50 == 0)
      std::printf("  epoch %d\n", epoch);
    std::fflush(stdout);
  };

  const MetaTrainResult result = meta_train(cfg, *train_family, *eval_family, progress);

  const std::string ckpt_path =
      opt.checkpoint_path.empty()
          ? (fs::path(opt.common.out_dir) / checkpoint_filename(cfg.rank, cfg.snapshots)).string()
          : opt.checkpoint_path;
  save_checkpoint(result.best, ckpt_path);

  const std::string scores_path =
      opt.scores_path.empty()
          ? (fs::path(opt.common.out_dir) /
             ("epoch-scores-R" + std::to_string(cfg.rank) + "-m" + std::to_string(cfg.snapshots) +
              ".csv"))
                .string()
          : opt.scores_path;
  write_epoch_scores_csv(scores_path, result.epoch_scores);

  std::printf("best checkpoint: epoch %d, score %.6g (aborted epochs: %d)\n", result.best.epoch,
              result.best.score, result.aborted_epochs);
  std::printf("wrote %s and %s\n", ckpt_path.c_str(), scores_path.c_str());
  return 0;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateOpts {
  CommonOpts common;
  std::string task;
  std::string optimizer;
  std::string checkpoint_path;
  int steps = 1000;
  int runs = 30;
  double lr = 0.01;
  int rank = -1;       // assertion against the checkpoint when >= 0
  int snapshots = -1;  // override of the checkpoint window when >= 0
};

struct NamedPolicy {
  std::string label;
  PolicyFactory factory;
  int rank = 0;
  int snapshots = 0;
};

NamedPolicy build_policy(const EvaluateOpts& opt) {
  if (opt.optimizer == "adam") {
    AdamConfig cfg;
    cfg.lr = opt.lr;
    return {"Adam", [cfg] { return make_adam_policy(cfg); }, 0, 0};
  }
  if (opt.optimizer == "sgd") {
    const double lr = opt.lr;
    return {"SGD", [lr] { return make_sgd_policy(lr); }, 0, 0};
  }
  if (opt.optimizer != "l2o" && opt.optimizer != "l2o-dmd")
    throw UsageError("unknown optimizer '" + opt.optimizer +
                     "'; choose one of l2o, l2o-dmd, adam, sgd");
  if (opt.checkpoint_path.empty())
    throw UsageError("--checkpoint is required for optimizer " + opt.optimizer);
  Checkpoint ckpt = load_checkpoint(opt.checkpoint_path);
  if (opt.optimizer == "l2o" && ckpt.params.rank != 0)
    throw contract_error("checkpoint " + opt.checkpoint_path + " has R=" +
                         std::to_string(ckpt.params.rank) + ", expected R=0 for optimizer l2o");
  if (opt.optimizer == "l2o-dmd" && ckpt.params.rank < 1)
    throw contract_error("checkpoint " + opt.checkpoint_path +
                         " has R=0, expected R>=1 for optimizer l2o-dmd");
  if (opt.rank >= 0 && opt.rank != ckpt.params.rank)
    throw contract_error("--rank " + std::to_string(opt.rank) + " does not match checkpoint R=" +
                         std::to_string(ckpt.params.rank));
  if (opt.snapshots > 0) {
    if (opt.snapshots < ckpt.params.rank)
      throw contract_error("--snapshots " + std::to_string(opt.snapshots) +
                           " is below the checkpoint rank R=" +
                           std::to_string(ckpt.params.rank));
    ckpt.snapshots_m = opt.snapshots;
  }
  const std::string label = optimizer_label(ckpt.params.rank, ckpt.snapshots_m);
  return {label,
          [ckpt] { return make_lstm_policy(ckpt.params, ckpt.snapshots_m); },
          ckpt.params.rank, ckpt.snapshots_m};
}

int cmd_evaluate(const EvaluateOpts& opt) {
  const TaskSpec& spec = require_task(opt.task);
  ensure_out_dir(opt.common.out_dir);
  TaskProvider provider(opt.common.data_dir);
  auto family = provider.family(spec, TaskProvider::Split::test);
  const NamedPolicy policy = build_policy(opt);

  EvalOptions eopts;
  eopts.steps = opt.steps;
  eopts.runs = opt.runs;
  eopts.seed = opt.common.seed;
  eopts.jobs = opt.common.jobs;

  TrajectoryLog log;
  const EvalStats stats = evaluate_policy(policy.factory, *family, eopts, &log);

  const std::string tag = spec.name + "-" + opt.optimizer;
  const fs::path out(opt.common.out_dir);
  write_per_run_csv((out / ("runs-" + tag + ".csv")).string(), stats);
  write_curve_csv((out / ("curve-" + tag + ".csv")).string(), stats);
  write_trajectory_csv((out / ("trajectory-" + tag + ".csv")).string(), log, policy.rank);
  write_results_csv((out / ("results-" + tag + ".csv")).string(),
                    results_rows(spec.name, policy.label, stats));

  std::printf("%s on %s: %d runs, %d steps, %d diverged\n", policy.label.c_str(),
              spec.name.c_str(), stats.runs, stats.steps, stats.divergences);
  std::printf("  loss@%d: %.6g +- %.6g\n", std::min(300, opt.steps), stats.loss300_mean,
              stats.loss300_std);
  std::printf("  last-10 sum: %.6g +- %.6g\n", stats.last10_mean, stats.last10_std);
  std::printf("wrote runs/curve/trajectory/results CSVs under %s\n",
              opt.common.out_dir.c_str());
  return 0;
}

// ---- sweep -----------------------------------------------------------------

struct SweepOpts {
  CommonOpts common;
  std::string task;
  std::vector<std::string> pairs;  // "R,m"
  std::string checkpoint_dir;
  int steps = 1000;
  int runs = 30;
  double lr = 0.01;
  bool with_adam = false;
  bool with_sgd = false;
  int rolling = 30;
};

int cmd_sweep(const SweepOpts& opt) {
  const TaskSpec& spec = require_task(opt.task);
  if (opt.pairs.empty()) throw UsageError("sweep: need at least one --pair R,m");
  ensure_out_dir(opt.common.out_dir);
  TaskProvider provider(opt.common.data_dir);
  auto family = provider.family(spec, TaskProvider::Split::test);
  const std::string ckpt_dir =
      opt.checkpoint_dir.empty() ? opt.common.out_dir : opt.checkpoint_dir;

  EvalOptions eopts;
  eopts.steps = opt.steps;
  eopts.runs = opt.runs;
  eopts.seed = opt.common.seed;
  eopts.jobs = opt.common.jobs;

  std::vector<ResultsRow> rows;
  std::vector<CurveSeries> curves;
  for (const std::string& pair : opt.pairs) {
    int rank = 0, snaps = 0;
    if (std::sscanf(pair.c_str(), "%d,%d", &rank, &snaps) != 2 || rank < 1 || snaps < rank)
      throw UsageError("sweep: bad --pair '" + pair + "', expected R,m with 1 <= R <= m");
    const std::string path = (fs::path(ckpt_dir) / checkpoint_filename(rank, snaps)).string();
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.params.rank != rank)
      throw contract_error("checkpoint " + path + " has R=" + std::to_string(ckpt.params.rank) +
                           ", expected " + std::to_string(rank));
    ckpt.snapshots_m = snaps;
    const std::string label = optimizer_label(rank, snaps);
    std::printf("sweep: evaluating %s on %s\n", label.c_str(), spec.name.c_str());
    const EvalStats stats = evaluate_optimizer(ckpt, *family, eopts);
    for (auto r : results_rows(spec.name, label, stats)) rows.push_back(r);
    curves.push_back({label, rolling_mean(stats.mean_curve, opt.rolling),
                      rolling_mean(stats.std_curve, opt.rolling)});
  }
  if (opt.with_adam) {
    AdamConfig cfg;
    cfg.lr = opt.lr;
    const EvalStats stats =
        evaluate_policy([cfg] { return make_adam_policy(cfg); }, *family, eopts);
    for (auto r : results_rows(spec.name, "Adam", stats)) rows.push_back(r);
    curves.push_back({"Adam", rolling_mean(stats.mean_curve, opt.rolling),
                      rolling_mean(stats.std_curve, opt.rolling)});
  }
  if (opt.with_sgd) {
    const double lr = opt.lr;
    const EvalStats stats =
        evaluate_policy([lr] { return make_sgd_policy(lr); }, *family, eopts);
    for (auto r : results_rows(spec.name, "SGD", stats)) rows.push_back(r);
    curves.push_back({"SGD", rolling_mean(stats.mean_curve, opt.rolling),
                      rolling_mean(stats.std_curve, opt.rolling)});
  }

  const fs::path out(opt.common.out_dir);
  write_results_csv((out / ("sweep-" + spec.name + ".csv")).string(), rows);
  write_svg_chart((out / ("sweep-" + spec.name + ".svg")).string(),
                  spec.name + " (rolling mean " + std::to_string(opt.rolling) + ")", "step",
                  "loss", curves);
  std::printf("wrote sweep CSV and SVG under %s\n", opt.common.out_dir.c_str());
  return 0;
}

// ---- dmd-analyze -----------------------------------------------------------

struct DmdAnalyzeOpts {
  CommonOpts common;
  std::string input;
  int rank = 1;
  int snapshots = 10;
  std::string out_path;
  std::string modes_path;
};

std::vector<std::vector<double>> read_state_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw parse_error(parse_error::kind::bad_value,
                        "trajectory csv: non-numeric cell on line " + std::to_string(line_no));
    }
    first = false;
    if (!rows.empty() && rows.back().size() != row.size())
      throw parse_error(parse_error::kind::count_mismatch,
                        "trajectory csv: ragged row on line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_dmd_analyze(const DmdAnalyzeOpts& opt) {
  if (opt.rank < 1 || opt.snapshots < opt.rank)
    throw UsageError("dmd-analyze: need 1 <= R <= m");
  ensure_out_dir(opt.common.out_dir);
  const auto rows = read_state_csv(opt.input);
  const int m = opt.snapshots;
  if (static_cast<int>(rows.size()) < m + 1)
    throw contract_error("dmd-analyze: " + std::to_string(rows.size()) + " state rows, need " +
                         std::to_string(m + 1));
  const int dim = static_cast<int>(rows.front().size());
  if (dim < 2)
    throw contract_error("dmd-analyze: need at least 2 columns per state row");

  const DmdConfig cfg(opt.rank, m);
  SnapshotWindow window(dim, m);
  const std::string out_path =
      opt.out_path.empty()
          ? (fs::path(opt.common.out_dir) / "dmd-eigenvalues.csv").string()
          : opt.out_path;
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + out_path);
  out << "step";
  for (int i = 1; i <= opt.rank; ++i) out << ",re_" << i << ",im_" << i;
  out << "\n";

  for (size_t t = 0; t < rows.size(); ++t) {
    const auto& row = rows[t];
    window.push(std::span<const double>(row.data(), row.size() - 1), row.back());
    if (!window.ready()) continue;
    const DmdFeatures feats = dmd_eigenvalues(window, cfg);
    out << (t + 1);
    for (double v : feats.values) out << ',' << format_double(v);
    out << '\n';
  }

  if (!opt.modes_path.empty()) {
    const DmdModes modes = dmd_modes(window, cfg);
    std::ofstream mout(opt.modes_path, std::ios::binary);
    if (!mout) throw io_error("cannot open for writing: " + opt.modes_path);
    mout << "component";
    for (int c = 1; c <= modes.cols; ++c) mout << ",mode" << c << "_re,mode" << c << "_im";
    mout << '\n';
    for (int r = 0; r < modes.rows; ++r) {
      mout << r;
      for (int c = 0; c < modes.cols; ++c)
        mout << ',' << format_double(modes.at(r, c).real()) << ','
             << format_double(modes.at(r, c).imag());
      mout << '\n';
    }
  }
  std::printf("wrote %s (%zu windows)\n", out_path.c_str(), rows.size() - m);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L2O-DMD learned-optimizer benchmark"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --config and friends appear after the subcommand
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");

  MetaTrainOpts mt;
  CLI::App* train = app.add_subcommand("meta-train", "Train the learned optimizer");
  add_common(train, mt.common);
  train->add_option("--task", mt.task, "Training task (default mnist-train)");
  train->add_option("--rank", mt.cfg.rank, "DMD rank R (0 disables DMD features)");
  train->add_option("--snapshots", mt.cfg.snapshots, "DMD window size m");
  train->add_option("--epochs", mt.cfg.outer_epochs, "Outer-loop epochs N");
  train->add_option("--inner-steps", mt.cfg.inner_steps, "Optimizee steps per epoch T");
  train->add_option("--unroll", mt.cfg.unroll, "Meta-update period u");
  train->add_option("--meta-lr", mt.cfg.meta_lr, "Meta learning rate alpha");
  train->add_option("--eval-every", mt.cfg.eval_every, "Epochs between evaluations");
  train->add_option("--eval-instances", mt.cfg.eval_instances, "Fresh instances per evaluation");
  train->add_option("--subset", mt.subset, "Keep only the first n training examples");
  train->add_flag("--meta-sgd", mt.cfg.meta_sgd, "Meta-update by plain SGD instead of Adam");
  train->add_option("--checkpoint", mt.checkpoint_path, "Checkpoint output path");
  train->add_option("--scores-csv", mt.scores_path, "Epoch-score CSV output path");
  train->footer("Outputs: checkpoint JSON (version, R, m, hidden_size, output_scale,\n"
                "preprocess_p, score, epoch, params) and an epoch-score CSV with\n"
                "columns epoch,score.");

  EvaluateOpts ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate an optimizer on a task");
  add_common(evaluate, ev.common);
  evaluate->add_option("--task", ev.task, "Task name")->required();
  evaluate->add_option("--optimizer", ev.optimizer, "l2o | l2o-dmd | adam | sgd")->required();
  evaluate->add_option("--checkpoint", ev.checkpoint_path, "Checkpoint (learned optimizers)");
  evaluate->add_option("--steps", ev.steps, "Optimizee training steps per run");
  evaluate->add_option("--runs", ev.runs, "Independent runs");
  evaluate->add_option("--lr", ev.lr, "Learning rate for adam/sgd baselines");
  evaluate->add_option("--rank", ev.rank, "Assert the checkpoint has this R");
  evaluate->add_option("--snapshots", ev.snapshots, "Override the DMD window size m");
  evaluate->footer(
      "Outputs under --out-dir (full round-trip decimal precision):\n"
      "  runs-<task>-<opt>.csv        run,diverged,loss_at_300,last10_sum\n"
      "  curve-<task>-<opt>.csv       step,mean_loss,std_loss\n"
      "  trajectory-<task>-<opt>.csv  step,loss,update_norm,re_1,im_1,...\n"
      "  results-<task>-<opt>.csv     task,optimizer,metric,mean,std,runs,divergences\n"
      "loss_at_300 reads the loss at step min(300, --steps).");

  SweepOpts sw;
  CLI::App* sweep = app.add_subcommand("sweep", "Evaluate a grid of (R,m) checkpoints");
  add_common(sweep, sw.common);
  sweep->add_option("--task", sw.task, "Task name")->required();
  sweep->add_option("--pair", sw.pairs, "R,m pair; repeatable")->required();
  sweep->add_option("--checkpoint-dir", sw.checkpoint_dir,
                    "Directory holding checkpoint-R{R}-m{m}.json files (default --out-dir)");
  sweep->add_option("--steps", sw.steps, "Optimizee training steps per run");
  sweep->add_option("--runs", sw.runs, "Independent runs");
  sweep->add_option("--lr", sw.lr, "Baseline learning rate");
  sweep->add_flag("--with-adam", sw.with_adam, "Overlay the Adam baseline");
  sweep->add_flag("--with-sgd", sw.with_sgd, "Overlay the SGD baseline");
  sweep->add_option("--rolling", sw.rolling, "Rolling-mean window for the plot");
  sweep->footer("Outputs: sweep-<task>.csv (task,optimizer,metric,mean,std,runs,divergences)\n"
                "and sweep-<task>.svg overlaying rolling-mean loss curves labeled\n"
                "L2O-DMD(R,m).");

  DmdAnalyzeOpts da;
  CLI::App* analyze = app.add_subcommand("dmd-analyze", "Sliding-window DMD of a trajectory CSV");
  add_common(analyze, da.common);
  analyze->add_option("--input", da.input, "Trajectory CSV; columns form the state vectors")
      ->required();
  analyze->add_option("--rank", da.rank, "DMD rank R");
  analyze->add_option("--snapshots", da.snapshots, "DMD window size m");
  analyze->add_option("--out", da.out_path, "Eigenvalue CSV output path");
  analyze->add_option("--modes-out", da.modes_path, "Dump final-window DMD modes to this CSV");
  analyze->footer(
      "Input rows are state vectors (last column = loss). Output columns:\n"
      "step,re_1,im_1,...,re_R,im_R — one row per full window (rows - m total).\n"
      "--modes-out columns: component,mode1_re,mode1_im,...");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  try {
    if (train->parsed()) return cmd_meta_train(mt);
    if (evaluate->parsed()) return cmd_evaluate(ev);
    if (sweep->parsed()) return cmd_sweep(sw);
    if (analyze->parsed()) return cmd_dmd_analyze(da);
    std::fprintf(stderr, "no subcommand given\n");
    return 64;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 64;
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const l2o::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 65;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 70;
  }
}
