#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pidistill/checkpoint.hpp"
#include "pidistill/dataset.hpp"
#include "pidistill/heads.hpp"
#include "pidistill/metrics.hpp"
#include "pidistill/split.hpp"

namespace pidistill {

enum class Method { image_only, teacher, pi_distill, self_distill };

std::string to_string(Method m);
Method parse_method(std::string_view s);
bool needs_teacher(Method m);

inline constexpr double kDefaultLambda = 0.75;
inline constexpr double kDefaultTau = 0.25;
inline constexpr double kAttentionLearningRate = 1e-4;
inline constexpr double kLinearProbeLearningRate = 1e-3;

struct TrainConfig {
  Method method = Method::image_only;
  double lambda = kDefaultLambda;
  double tau = kDefaultTau;
  /// Unset: 1e-4 for the attention head, 1e-3 for linear probes.
  std::optional<double> learning_rate;
  std::size_t batch_size = 64;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  HeadVariant head = HeadVariant::attention;
  double dropout_p = 0.2;
  bool scale_logits = true;
  /// AUC averaging used for checkpoint selection on multiclass tasks.
  Averaging selection_averaging = Averaging::micro;
  /// Also log train-split AUC after every epoch.
  bool eval_train = false;
  std::string run_id = "run";

  double effective_learning_rate() const;
  /// Throws ConfigError on out-of-range settings.
  void validate() const;
  /// Stable hash of every setting that affects training.
  std::string fingerprint() const;
};

struct EpochMetric {
  std::size_t epoch = 0;
  std::string split;   // train | validation
  std::string metric;  // loss | auc | auprc
  double value = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochMetric> log;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
  double best_val_auprc = 0.0;
  double last_val_auc = 0.0;
  std::size_t steps = 0;
};

/// Precomputed teacher soft targets softmax(logits / tau), one row per sample
/// of the dataset (rows for samples the teacher cannot score stay empty).
struct SoftTargets {
  Matrix probs;
};

struct EvalMetrics {
  double auc = 0.0;    // NaN when undefined
  double auprc = 0.0;  // NaN when undefined
};

/// Eval-mode class probabilities for the listed samples.
ScoredSet predict(const Model& model, const EmbeddingDataset& data, const std::vector<std::size_t>& indices);
EvalMetrics evaluate(const Model& model, const EmbeddingDataset& data, const std::vector<std::size_t>& indices,
                     Averaging averaging);

/// Fresh model for a config; all student methods share one init stream per seed.
Model initial_model(const EmbeddingDataset& data, const TrainConfig& config);

/// Minimizes the teacher objective (cross-entropy over image+report) and
/// returns the best-validation-AUC checkpoint.
TrainResult train_teacher(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config);

/// image_only: cross-entropy. pi_distill: distill from a multimodal teacher.
/// self_distill: distill from an image-only teacher. Teacher targets are
/// computed in eval mode and never receive gradients.
TrainResult train_student(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config,
                          const Checkpoint* teacher);

/// Dispatches on config.method.
TrainResult train(const EmbeddingDataset& data, const SplitPlan& split, const TrainConfig& config,
                  const Checkpoint* teacher = nullptr);

/// Minibatches of a shuffled epoch order; the last partial batch is kept.
std::vector<std::vector<std::size_t>> epoch_batches(const std::vector<std::size_t>& train, std::uint64_t seed,
                                                    std::size_t epoch, std::size_t batch_size);

/// CSV rows: run_id,epoch,split,metric,value
void write_metric_log(std::ostream& out, const std::string& run_id, const std::vector<EpochMetric>& log,
                      bool header = true);
std::string format_double(double v);

}  // namespace pidistill
