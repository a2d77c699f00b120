#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidistill/split.hpp"
#include "pidistill/trainer.hpp"

namespace pidistill {

/// A (method x fraction x seed) experiment grid over one dataset.
struct SweepConfig {
  std::filesystem::path dataset;  // manifest path
  std::vector<Method> methods;
  std::vector<double> fractions;
  std::vector<std::uint64_t> seeds;
  /// Training epochs for every fraction in `fractions`.
  std::vector<std::pair<double, std::size_t>> epochs_per_fraction;
  /// lambda, tau, learning rate, batch size, head and dropout for every cell.
  TrainConfig train;
  SplitOptions split;
  std::filesystem::path output_dir = "sweep_out";
  std::size_t workers = 1;
  /// Off: wall_s is written as NA so reruns are byte-identical.
  bool record_wall_time = false;

  void validate() const;
  std::size_t epochs_for(double fraction) const;
  nlohmann::json to_json() const;
  static SweepConfig from_json(const nlohmann::json& j);
};

/// One scheduled training run. `teacher_run_id` names the checkpoint a
/// distillation cell consumes.
struct Cell {
  Method method = Method::image_only;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string run_id;
  std::optional<std::string> teacher_run_id;
};

std::string make_run_id(Method m, HeadVariant head, double fraction, std::uint64_t seed);

/// Topological plan: per (fraction, seed), teacher and image_only runs come
/// before the pi_distill / self_distill runs that reuse their checkpoints.
/// Dependencies are added even when their method is not listed.
std::vector<Cell> plan_sweep(const SweepConfig& config);

struct RunResult {
  std::string run_id;
  std::string method;
  std::string head;
  double fraction = 0.0;
  std::size_t n_train = 0;
  std::uint64_t seed = 0;
  std::string split_hash;
  std::size_t best_epoch = 0;
  double val_auc = 0.0;
  double val_auprc = 0.0;
  std::optional<double> wall_s;
};

struct SweepOutcome {
  std::vector<RunResult> results;  // plan order, failed cells omitted
  std::vector<std::pair<std::string, std::string>> failures;  // run_id, reason
  std::size_t trained = 0;  // cells actually trained in this invocation
  std::size_t reused = 0;   // cells whose results were already on disk
};

/// Executes every cell with up to `workers` threads, skipping cells whose
/// result file exists. Writes checkpoints/, logs/, cells/, results.csv,
/// summary.csv and failures.csv (if any) under output_dir.
SweepOutcome run_sweep(const SweepConfig& config);

inline constexpr const char* kResultsHeader =
    "run_id,method,head,fraction,n_train,seed,split_hash,best_epoch,val_auc,val_auprc,wall_s";
inline constexpr const char* kSummaryHeader = "method,fraction,n_train,metric,mean,sd,ci_lo,ci_hi,level,n_seeds";

std::string results_csv(const std::vector<RunResult>& results);
std::vector<RunResult> parse_results_csv(const std::string& text);
std::vector<RunResult> read_results_csv(const std::filesystem::path& path);

/// Per (method, fraction) mean / sd / Student-t CI of val_auc and val_auprc
/// at each level, in first-appearance order.
std::string summary_csv(const std::vector<RunResult>& results, const std::vector<double>& levels);

}  // namespace pidistill
