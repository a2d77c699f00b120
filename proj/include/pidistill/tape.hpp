#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "pidistill/kernels.hpp"
#include "pidistill/matrix.hpp"
#include "pidistill/rng.hpp"

namespace pidistill {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

/// Records differentiable operations in execution order. `backward` walks the
/// record in exact reverse, accumulating gradients additively into shared
/// inputs. Copying a tape copies the full record, so a cloned tape replays
/// the same reverse pass.
class Tape {
 public:
  Var constant(Matrix value);
  Var parameter(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.index].value; }
  /// Gradient of the last backward() target with respect to v. Zero-shaped
  /// like v when v did not influence the target.
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.index].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse pass from a 1x1 target with seed gradient 1.
  void backward(Var target);
  /// Reverse pass from an arbitrary target with the given seed gradient.
  void backward(Var target, const Matrix& seed);

  // Used by op implementations.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;
  Var record(Matrix value, bool requires_grad, BackwardFn fn);
  Matrix& grad_mut(std::size_t index);
  const Matrix& value_at(std::size_t index) const { return nodes_[index].value; }
  bool requires_grad_at(std::size_t index) const { return nodes_[index].requires_grad; }

 private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable operations. Each records one node.

/// c = a * b
Var matmul(Tape& t, Var a, Var b);
/// c = a * b^T
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
/// Adds a 1 x c row vector to every row of an n x c matrix.
Var add_row_bias(Tape& t, Var a, Var bias);
Var scale(Tape& t, Var a, double s);
Var softmax_rows(Tape& t, Var a, double temperature);
/// Row-wise layer normalization without affine parameters.
Var layer_norm_rows(Tape& t, Var a, double eps = kernels::kLayerNormEps);
/// Inverted dropout; draws one uniform per entry (row-major) only when
/// training and p > 0.
Var dropout(Tape& t, Var a, double p, Rng& rng, bool training);
/// 1 x c mean over rows.
Var mean_pool_rows(Tape& t, Var a);
/// 1 x c copy of row r.
Var select_row(Tape& t, Var a, std::size_t r);
/// [a | b] column concatenation; rows must agree.
Var concat_cols(Tape& t, Var a, Var b);
/// Stacks 1 x c rows into an n x c matrix.
Var stack_rows(Tape& t, std::span<const Var> rows);
/// sum(a .* weights) as a 1x1 value.
Var weighted_sum(Tape& t, Var a, const Matrix& weights);

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over rows of -sum_c target(r,c) * log(max(p(r,c), floor)). Targets are
/// constants; no gradient flows into them.
Var soft_cross_entropy_mean(Tape& t, Var probs, const Matrix& targets,
                            double floor = kProbabilityFloor);

}  // namespace pidistill
