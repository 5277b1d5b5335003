#ifndef L2O_REPORTING_HPP
#define L2O_REPORTING_HPP

#include <string>
#include <utility>
#include <vector>

#include "l2o/meta_train.hpp"

namespace l2o {

// Full round-trip decimal formatting for CSV cells.
std::string format_double(double v);

struct ResultsRow {
  std::string task;
  std::string optimizer;
  std::string metric;
  double mean;
  double stddev;
  int runs;
  int divergences;
};

void write_results_csv(const std::string& path, const std::vector<ResultsRow>& rows);
void write_per_run_csv(const std::string& path, const EvalStats& stats);
void write_curve_csv(const std::string& path, const EvalStats& stats);
void write_trajectory_csv(const std::string& path, const TrajectoryLog& log, int rank);
void write_epoch_scores_csv(const std::string& path,
                            const std::vector<std::pair<int, double>>& scores);

// Rows of (task, optimizer) metrics extracted from an evaluation.
std::vector<ResultsRow> results_rows(const std::string& task, const std::string& optimizer,
                                     const EvalStats& stats);

// Recompute aggregate statistics from a per-run CSV written by
// write_per_run_csv (used to cross-check the reported table).
EvalStats read_per_run_csv(const std::string& path);

std::vector<double> rolling_mean(const std::vector<double>& xs, int window);

// Static SVG line chart: one polyline per series, optional +-1 std band.
struct CurveSeries {
  std::string label;
  std::vector<double> y;
  std::vector<double> band;  // optional std per point; empty for no band
};
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<CurveSeries>& series);

}  // namespace l2o

#endif  // L2O_REPORTING_HPP
