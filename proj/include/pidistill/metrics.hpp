#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pidistill/matrix.hpp"

namespace pidistill {

/// N x C class-probability scores with their true class indices.
struct ScoredSet {
  Matrix scores;
  std::vector<std::size_t> labels;

  /// Checks N >= 1, label range, and that rows sum to 1 within 1e-6.
  void validate() const;
};

enum class Averaging { binary, ovr, micro };

std::string to_string(Averaging a);
Averaging parse_averaging(std::string_view s);

struct MetricResult {
  double value = 0.0;
  std::vector<std::string> warnings;
};

/// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie), via midranks.
/// Throws UndefinedMetricError unless both classes are present.
double auc_binary(std::span<const double> scores, const std::vector<bool>& positives);

/// Average precision: sum over descending distinct thresholds of
/// (R_k - R_{k-1}) * P_k, tied scores entering together.
/// Throws UndefinedMetricError when there are no positives.
double auprc_binary(std::span<const double> scores, const std::vector<bool>& positives);

/// Multiclass AUC. ovr: unweighted mean of per-class AUCs, skipping classes
/// absent from the labels (or present in every row) with a warning. micro:
/// one binary AUC over the flattened N*C (score, one-hot) pairs. With C == 2
/// every averaging reduces to auc_binary on the class-1 column.
MetricResult auc_multiclass(const ScoredSet& s, Averaging averaging);

/// AUPRC: binary requires C == 2 (class 1 positive); micro flattens as above
/// and also reduces to the class-1 column when C == 2.
MetricResult auprc(const ScoredSet& s, Averaging averaging);

struct MetricSummary {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1)
  double level = 0.95;
  /// Present only when n >= 2.
  std::optional<double> half_width;

  std::size_t n() const { return values.size(); }
  double ci_lo() const { return half_width ? mean - *half_width : mean; }
  double ci_hi() const { return half_width ? mean + *half_width : mean; }
};

/// Mean, sample sd and a Student-t interval mean +/- t_{n-1,(1+level)/2} sd/sqrt(n).
/// Non-finite values are dropped with a warning.
MetricSummary aggregate(std::span<const double> values, double level);

/// Two-sided Student-t critical value for the given confidence level.
double student_t_critical(std::size_t dof, double level);

}  // namespace pidistill
