#include "pidistill/losses.hpp"

#include <algorithm>
#include <cmath>

#include "pidistill/error.hpp"
#include "pidistill/kernels.hpp"
#include "pidistill/tape.hpp"

namespace pidistill {

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(probs.size()) +
                    " classes");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

double soft_cross_entropy(std::span<const double> student, std::span<const double> target) {
  if (student.size() != target.size()) {
    throw DataError("soft cross-entropy over " + std::to_string(student.size()) + " vs " +
                    std::to_string(target.size()) + " classes");
  }
  double loss = 0.0;
  for (std::size_t c = 0; c < student.size(); ++c) {
    if (target[c] != 0.0) loss -= target[c] * std::log(std::max(student[c], kProbabilityFloor));
  }
  return loss;
}

double distillation_loss(std::span<const double> student_probs, std::size_t label,
                         std::span<const double> teacher_logits, double lambda, double tau) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  const Matrix soft = kernels::softmax_rows(Matrix::row_vector(teacher_logits), tau);
  return (1.0 - lambda) * cross_entropy(student_probs, label) +
         lambda * soft_cross_entropy(student_probs, soft.values());
}

std::vector<double> distillation_target(std::size_t label, std::span<const double> teacher_soft,
                                        double lambda, std::size_t classes) {
  if (label >= classes) throw DataError("label " + std::to_string(label) + " out of range");
  std::vector<double> t(classes, 0.0);
  if (lambda != 0.0) {
    if (teacher_soft.size() != classes) throw DataError("teacher target width mismatch");
    for (std::size_t c = 0; c < classes; ++c) t[c] = lambda * teacher_soft[c];
  }
  t[label] += 1.0 - lambda;
  return t;
}

}  // namespace pidistill
