#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pidistill/matrix.hpp"

namespace pidistill {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(std::span<const Matrix* const> params);
};

/// Bias-corrected Adam: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps). Throws TrainingError on a
/// non-finite gradient before touching any parameter.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options);

}  // namespace pidistill
