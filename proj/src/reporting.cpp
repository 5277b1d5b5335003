#include "l2o/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "l2o/errors.hpp"

namespace l2o {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

void write_results_csv(const std::string& path, const std::vector<ResultsRow>& rows) {
  auto out = open_out(path);
  out << "task,optimizer,metric,mean,std,runs,divergences\n";
  for (const auto& r : rows)
    out << r.task << ',' << r.optimizer << ',' << r.metric << ',' << format_double(r.mean) << ','
        << format_double(r.stddev) << ',' << r.runs << ',' << r.divergences << '\n';
}

void write_per_run_csv(const std::string& path, const EvalStats& stats) {
  auto out = open_out(path);
  out << "run,diverged,loss_at_300,last10_sum\n";
  for (size_t r = 0; r < stats.per_run.size(); ++r) {
    const RunMetrics& m = stats.per_run[r];
    out << r << ',' << (m.diverged ? 1 : 0) << ','
        << (m.diverged ? "" : format_double(m.loss_at_300)) << ','
        << (m.diverged ? "" : format_double(m.last10_sum)) << '\n';
  }
}

void write_curve_csv(const std::string& path, const EvalStats& stats) {
  auto out = open_out(path);
  out << "step,mean_loss,std_loss\n";
  for (size_t t = 0; t < stats.mean_curve.size(); ++t)
    out << (t + 1) << ',' << format_double(stats.mean_curve[t]) << ','
        << format_double(stats.std_curve[t]) << '\n';
}

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log, int rank) {
  auto out = open_out(path);
  out << "step,loss,update_norm";
  for (int i = 1; i <= rank; ++i) out << ",re_" << i << ",im_" << i;
  out << '\n';
  for (const auto& rec : log.records) {
    out << rec.step << ',' << format_double(rec.loss) << ',' << format_double(rec.update_norm);
    for (int i = 0; i < 2 * rank; ++i)
      out << ',' << format_double(i < static_cast<int>(rec.dmd.size()) ? rec.dmd[i] : 0.0);
    out << '\n';
  }
}

void write_epoch_scores_csv(const std::string& path,
                            const std::vector<std::pair<int, double>>& scores) {
  auto out = open_out(path);
  out << "epoch,score\n";
  for (const auto& [epoch, score] : scores)
    out << epoch << ',' << format_double(score) << '\n';
}

std::vector<ResultsRow> results_rows(const std::string& task, const std::string& optimizer,
                                     const EvalStats& stats) {
  return {
      {task, optimizer, "loss_at_300", stats.loss300_mean, stats.loss300_std, stats.runs,
       stats.divergences},
      {task, optimizer, "last10_sum", stats.last10_mean, stats.last10_std, stats.runs,
       stats.divergences},
  };
}

EvalStats read_per_run_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw parse_error(parse_error::kind::truncated, "per-run csv: missing header");
  EvalStats stats;
  std::vector<double> last10s, loss300s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    RunMetrics m;
    std::getline(ss, cell, ',');  // run index
    std::getline(ss, cell, ',');
    m.diverged = cell == "1";
    std::getline(ss, cell, ',');
    if (!m.diverged) m.loss_at_300 = std::stod(cell);
    std::getline(ss, cell, ',');
    if (!m.diverged) m.last10_sum = std::stod(cell);
    if (m.diverged)
      ++stats.divergences;
    else {
      last10s.push_back(m.last10_sum);
      loss300s.push_back(m.loss_at_300);
    }
    stats.per_run.push_back(m);
  }
  stats.runs = static_cast<int>(stats.per_run.size());
  auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
    mean = std::numeric_limits<double>::quiet_NaN();
    sd = 0.0;
    if (xs.empty()) return;
    double s = 0.0;
    for (double x : xs) s += x;
    mean = s / xs.size();
    if (xs.size() < 2) return;
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    sd = std::sqrt(acc / (xs.size() - 1));
  };
  mean_std(last10s, stats.last10_mean, stats.last10_std);
  mean_std(loss300s, stats.loss300_mean, stats.loss300_std);
  return stats;
}

std::vector<double> rolling_mean(const std::vector<double>& xs, int window) {
  if (window < 1) throw contract_error("rolling_mean: window must be >= 1");
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    acc += xs[i];
    if (i >= static_cast<size_t>(window)) acc -= xs[i - window];
    const size_t n = std::min<size_t>(i + 1, window);
    out[i] = acc / static_cast<double>(n);
  }
  return out;
}

namespace {

const char* kSeriesColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                               "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<CurveSeries>& series) {
  const int width = 860, height = 520;
  const int left = 70, right = 200, top = 50, bottom = 50;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  size_t max_len = 0;
  double ymin = 0.0, ymax = 1.0;
  bool any = false;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.y.size());
    for (size_t i = 0; i < s.y.size(); ++i) {
      const double v = s.y[i];
      if (!std::isfinite(v)) continue;
      const double b = (i < s.band.size() && std::isfinite(s.band[i])) ? s.band[i] : 0.0;
      if (!any) {
        ymin = v - b;
        ymax = v + b;
        any = true;
      } else {
        ymin = std::min(ymin, v - b);
        ymax = std::max(ymax, v + b);
      }
    }
  }
  if (!any || max_len < 2) {
    max_len = std::max<size_t>(max_len, 2);
  }
  if (ymax - ymin < 1e-12) {
    ymax += 1.0;
    ymin -= 1.0;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  auto sx = [&](size_t i) {
    return left + plot_w * static_cast<double>(i) / static_cast<double>(max_len - 1);
  };
  auto sy = [&](double v) { return top + plot_h * (1.0 - (v - ymin) / (ymax - ymin)); };

  auto out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\" "
      << "font-family=\"sans-serif\">" << title << "</text>\n";

  // Axes with a few horizontal grid lines.
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = ymin + (ymax - ymin) * g / 4.0;
    const double y = sy(v);
    out << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << left + plot_w << "\" y2=\""
        << y << "\" stroke=\"#dddddd\"/>\n";
    char lbl[32];
    std::snprintf(lbl, sizeof(lbl), "%.4g", v);
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << lbl
        << "</text>\n";
  }
  out << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << top + plot_h / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 18 " << top + plot_h / 2 << ")\">" << y_label << "</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const auto& cs = series[s];
    const char* color = kSeriesColors[s % (sizeof(kSeriesColors) / sizeof(kSeriesColors[0]))];
    if (!cs.band.empty()) {
      out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (size_t i = 0; i < cs.y.size(); ++i)
        if (std::isfinite(cs.y[i]))
          out << sx(i) << ',' << sy(cs.y[i] + (i < cs.band.size() ? cs.band[i] : 0.0)) << ' ';
      for (size_t i = cs.y.size(); i-- > 0;)
        if (std::isfinite(cs.y[i]))
          out << sx(i) << ',' << sy(cs.y[i] - (i < cs.band.size() ? cs.band[i] : 0.0)) << ' ';
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < cs.y.size(); ++i)
      if (std::isfinite(cs.y[i])) out << sx(i) << ',' << sy(cs.y[i]) << ' ';
    out << "\"/>\n";
    const double ly = top + 16.0 * (s + 1);
    out << "<line x1=\"" << left + plot_w + 10 << "\" y1=\"" << ly << "\" x2=\""
        << left + plot_w + 34 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + plot_w + 40 << "\" y=\"" << ly + 4
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << cs.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace l2o
