#include "pidistill/plotdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "pidistill/dataset.hpp"
#include "pidistill/error.hpp"
#include "pidistill/metrics.hpp"

namespace pidistill {

namespace {

std::string opt(const MetricSummary& s, double v) { return s.half_width ? format_double(v) : "NA"; }

double metric_of(const RunResult& r, const std::string& metric) {
  return metric == "val_auc" ? r.val_auc : r.val_auprc;
}

}  // namespace

PlotTables make_plot_tables(const std::vector<RunResult>& all, const PlotOptions& options) {
  std::vector<RunResult> rows;
  for (const auto& r : all) {
    if (options.methods.empty() ||
        std::find(options.methods.begin(), options.methods.end(), r.method) != options.methods.end()) {
      rows.push_back(r);
    }
  }
  if (rows.empty()) throw DataError("plotdata: selection contains no results");

  std::vector<std::string> methods;
  std::vector<double> fractions;
  for (const auto& r : rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(fractions.begin(), fractions.end(), r.fraction) == fractions.end()) fractions.push_back(r.fraction);
  }
  std::sort(fractions.begin(), fractions.end());

  PlotTables t;
  t.curves = std::string(kCurveHeader) + "\n";
  t.bars = std::string(kBarHeader) + "\n";
  t.diffs = std::string(kDiffHeader) + "\n";
  const std::vector<std::string> metrics{"val_auc", "val_auprc"};
  for (const auto& method : methods) {
    for (double f : fractions) {
      std::vector<const RunResult*> cell;
      for (const auto& r : rows)
        if (r.method == method && r.fraction == f) cell.push_back(&r);
      if (cell.empty()) continue;
      double n_train = 0.0;
      for (const auto* r : cell) n_train += static_cast<double>(r->n_train);
      n_train /= static_cast<double>(cell.size());
      for (const auto& metric : metrics) {
        std::vector<double> values;
        for (const auto* r : cell) values.push_back(metric_of(*r, metric));
        const MetricSummary c = aggregate(values, options.curve_level);
        t.curves += method + "," + format_double(f) + "," + format_double(n_train) + "," + metric + "," +
                    format_double(c.mean) + "," + opt(c, c.ci_lo()) + "," + opt(c, c.ci_hi()) + "," +
                    format_double(options.curve_level) + "," + std::to_string(c.n()) + "\n";
        const MetricSummary b = aggregate(values, options.bar_level);
        t.bars += method + "," + format_double(f) + "," + metric + "," + format_double(b.mean) + "," +
                  opt(b, b.ci_lo()) + "," + opt(b, b.ci_hi()) + "," + format_double(options.bar_level) + "," +
                  std::to_string(b.n()) + "\n";
      }
      if (method == options.baseline) continue;
      // Paired by seed against the baseline at the same fraction.
      std::map<std::uint64_t, const RunResult*> base;
      for (const auto& r : all)
        if (r.method == options.baseline && r.fraction == f) base[r.seed] = &r;
      if (base.empty()) continue;
      for (const auto& metric : metrics) {
        std::vector<double> diffs;
        for (const auto* r : cell) {
          const auto it = base.find(r->seed);
          if (it != base.end()) diffs.push_back(metric_of(*r, metric) - metric_of(*it->second, metric));
        }
        if (diffs.empty()) continue;
        const MetricSummary d = aggregate(diffs, options.bar_level);
        t.diffs += method + "," + options.baseline + "," + format_double(f) + "," + metric + "," +
                   format_double(d.mean) + "," + (d.n() >= 2 ? format_double(d.sd) : "NA") + "," +
                   opt(d, d.ci_lo()) + "," + opt(d, d.ci_hi()) + "," + format_double(options.bar_level) + "," +
                   std::to_string(d.n()) + "\n";
      }
    }
  }
  return t;
}

void emit_plotdata(const std::vector<RunResult>& results, const std::filesystem::path& dir,
                   const PlotOptions& options) {
  const PlotTables t = make_plot_tables(results, options);
  write_text_atomic(dir / "curves.csv", t.curves);
  write_text_atomic(dir / "bars.csv", t.bars);
  write_text_atomic(dir / "paired_diffs.csv", t.diffs);
}

}  // namespace pidistill
