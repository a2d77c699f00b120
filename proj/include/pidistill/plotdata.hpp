#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pidistill/sweep.hpp"

namespace pidistill {

struct PlotOptions {
  std::string baseline = "image_only";
  double curve_level = 0.90;
  double bar_level = 0.95;
  /// Restrict to these methods; empty keeps all.
  std::vector<std::string> methods;
};

inline constexpr const char* kCurveHeader = "method,fraction,n_train,metric,mean,ci_lo,ci_hi,level,n_seeds";
inline constexpr const char* kBarHeader = "method,fraction,metric,mean,ci_lo,ci_hi,level,n_seeds";
inline constexpr const char* kDiffHeader =
    "method,baseline,fraction,metric,mean_diff,sd,ci_lo,ci_hi,level,n_pairs";

struct PlotTables {
  std::string curves;  // sample-efficiency: x = n_train
  std::string bars;    // per-method means with CIs
  std::string diffs;   // per-seed paired (method - baseline) differences
};

/// Throws DataError when the selection leaves no rows.
PlotTables make_plot_tables(const std::vector<RunResult>& results, const PlotOptions& options);

/// Writes curves.csv, bars.csv and paired_diffs.csv into `dir`.
void emit_plotdata(const std::vector<RunResult>& results, const std::filesystem::path& dir,
                   const PlotOptions& options);

}  // namespace pidistill
