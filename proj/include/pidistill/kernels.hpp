#pragma once

#include <span>
#include <vector>

#include "pidistill/matrix.hpp"
#include "pidistill/rng.hpp"

// Value-level kernels. The differentiable versions in tape.hpp call these
// for their forward pass.
namespace pidistill::kernels {

inline constexpr double kLayerNormEps = 1e-5;

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// a^T * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

/// Row-wise softmax of m / temperature, max-subtracted.
Matrix softmax_rows(const Matrix& m, double temperature);

/// Normalizes v to zero mean and unit (biased) variance, no affine terms.
std::vector<double> layer_norm(std::span<const double> v, double eps = kLayerNormEps);
Matrix layer_norm_rows(const Matrix& m, double eps = kLayerNormEps);

/// Inverted-dropout keep mask: one uniform draw per entry, row-major. Kept
/// entries hold 1/(1-p), dropped entries 0.
Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, Rng& rng);

/// Inverted dropout. Identity when !training or p == 0 (no draws consumed).
Matrix dropout(const Matrix& m, double p, Rng& rng, bool training);

std::vector<double> mean_pool_rows(const Matrix& m);

}  // namespace pidistill::kernels
