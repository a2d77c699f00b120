#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pidistill {

/// -log(max(probs[label], 1e-12)), in nats.
double cross_entropy(std::span<const double> probs, std::size_t label);

/// -sum_c target[c] * log(max(student[c], 1e-12)).
double soft_cross_entropy(std::span<const double> student, std::span<const double> target);

/// (1 - lambda) * CE(f, y) + lambda * softCE(f, softmax(teacher_logits / tau)).
/// The teacher side is a constant target.
double distillation_loss(std::span<const double> student_probs, std::size_t label,
                         std::span<const double> teacher_logits, double lambda, double tau);

/// Row target whose soft cross-entropy equals the distillation loss:
/// (1 - lambda) * onehot(label) + lambda * teacher_soft. With lambda == 0 it
/// is exactly the one-hot vector.
std::vector<double> distillation_target(std::size_t label, std::span<const double> teacher_soft,
                                        double lambda, std::size_t classes);

}  // namespace pidistill
