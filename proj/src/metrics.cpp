#include "pidistill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "pidistill/error.hpp"
#include "pidistill/log.hpp"

namespace pidistill {

void ScoredSet::validate() const {
  if (scores.rows() == 0) throw DataError("scored set is empty");
  if (labels.size() != scores.rows()) {
    throw DataError("scored set has " + std::to_string(scores.rows()) + " rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= scores.cols()) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range at row " + std::to_string(i));
    }
    double total = 0.0;
    for (double v : scores.row(i)) total += v;
    if (std::abs(total - 1.0) > 1e-6) {
      throw DataError("scores row " + std::to_string(i) + " sums to " + std::to_string(total));
    }
  }
}

std::string to_string(Averaging a) {
  switch (a) {
    case Averaging::binary: return "binary";
    case Averaging::ovr: return "ovr";
    case Averaging::micro: return "micro";
  }
  return "unknown";
}

Averaging parse_averaging(std::string_view s) {
  if (s == "binary") return Averaging::binary;
  if (s == "ovr") return Averaging::ovr;
  if (s == "micro") return Averaging::micro;
  throw ConfigError("unknown averaging '" + std::string(s) + "'");
}

double auc_binary(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw DataError("auc: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(positives.size()) + " labels");
  }
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw UndefinedMetricError("AUC undefined: need at least one positive and one negative");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of midranks (1-based) of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (positives[order[j]]) ++pos_in_group;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auprc_binary(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size()) {
    throw DataError("auprc: " + std::to_string(scores.size()) + " scores vs " +
                    std::to_string(positives.size()) + " labels");
  }
  const std::size_t n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
  if (n_pos == 0) throw UndefinedMetricError("AUPRC undefined: no positives");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  double area = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      positives[order[j]] ? ++tp : ++fp;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

namespace {

using BinaryMetric = double (*)(std::span<const double>, const std::vector<bool>&);

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
  return out;
}

std::vector<bool> is_class(const std::vector<std::size_t>& labels, std::size_t c) {
  std::vector<bool> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == c;
  return out;
}

double micro(const ScoredSet& s, BinaryMetric metric) {
  const std::size_t n = s.scores.rows(), k = s.scores.cols();
  std::vector<double> flat(s.scores.values().begin(), s.scores.values().end());
  std::vector<bool> onehot(n * k, false);
  for (std::size_t r = 0; r < n; ++r) onehot[r * k + s.labels[r]] = true;
  return metric(flat, onehot);
}

double binary_column(const ScoredSet& s, BinaryMetric metric) {
  return metric(column(s.scores, 1), is_class(s.labels, 1));
}

}  // namespace

MetricResult auc_multiclass(const ScoredSet& s, Averaging averaging) {
  s.validate();
  const std::size_t k = s.scores.cols();
  if (k < 2) throw DataError("AUC needs at least two classes");
  if (k == 2) return {binary_column(s, auc_binary), {}};
  if (averaging == Averaging::binary) {
    throw ConfigError("binary averaging requires two classes, got " + std::to_string(k));
  }
  if (averaging == Averaging::micro) return {micro(s, auc_binary), {}};

  MetricResult result;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    try {
      total += auc_binary(column(s.scores, c), is_class(s.labels, c));
      ++used;
    } catch (const UndefinedMetricError&) {
      result.warnings.push_back("class " + std::to_string(c) + " skipped in one-vs-rest AUC (single-class split)");
      log_warning(result.warnings.back());
    }
  }
  if (used == 0) throw UndefinedMetricError("one-vs-rest AUC undefined: no class has both outcomes");
  result.value = total / static_cast<double>(used);
  return result;
}

MetricResult auprc(const ScoredSet& s, Averaging averaging) {
  s.validate();
  const std::size_t k = s.scores.cols();
  if (k < 2) throw DataError("AUPRC needs at least two classes");
  if (k == 2) return {binary_column(s, auprc_binary), {}};
  if (averaging != Averaging::micro) {
    throw ConfigError("AUPRC with " + std::to_string(k) + " classes supports micro averaging only");
  }
  return {micro(s, auprc_binary), {}};
}

double student_t_critical(std::size_t dof, double level) {
  if (dof == 0) throw ConfigError("Student-t interval needs at least one degree of freedom");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.5 + level / 2.0);
}

MetricSummary aggregate(std::span<const double> values, double level) {
  MetricSummary s;
  s.level = level;
  for (double v : values) {
    if (std::isfinite(v)) {
      s.values.push_back(v);
    } else {
      log_warning("aggregate: dropping undefined per-seed value");
    }
  }
  const std::size_t n = s.values.size();
  if (n == 0) {
    s.mean = std::nan("");
    s.sd = std::nan("");
    return s;
  }
  s.mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / static_cast<double>(n);
  if (n < 2) return s;
  double ss = 0.0;
  for (double v : s.values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(n - 1));
  s.half_width = student_t_critical(n - 1, level) * s.sd / std::sqrt(static_cast<double>(n));
  return s;
}

}  // namespace pidistill
