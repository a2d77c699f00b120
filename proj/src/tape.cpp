#include "pidistill/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "pidistill/error.hpp"

namespace pidistill {

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::record(Matrix value, bool requires_grad, BackwardFn fn) {
  nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, std::move(fn)});
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_mut(std::size_t index) {
  Node& n = nodes_[index];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_[v.index];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    // Never touched by the reverse pass.
    n.grad = Matrix(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var target) {
  const Matrix& v = value(target);
  if (v.rows() != 1 || v.cols() != 1) {
    throw DataError("backward() without a seed requires a 1x1 target, got " + v.shape_string());
  }
  backward(target, Matrix(1, 1, 1.0));
}

void Tape::backward(Var target, const Matrix& seed) {
  const Matrix& v = value(target);
  if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
    throw DataError("backward seed shape " + seed.shape_string() + " does not match target " +
                    v.shape_string());
  }
  for (Node& n : nodes_) n.grad = Matrix{};
  grad_mut(target.index) = seed;
  for (std::size_t i = target.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) continue;
    n.backward(*this, i);
  }
}

namespace {

bool any_grad(const Tape& t, std::initializer_list<Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [&](Var v) { return t.requires_grad(v); });
}

void accumulate(Tape& t, std::size_t index, const Matrix& delta) {
  if (!t.requires_grad_at(index)) return;
  Matrix& g = t.grad_mut(index);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = kernels::matmul(t.value(a), t.value(b));
  const std::size_t ia = a.index, ib = b.index;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    if (tp.requires_grad_at(ia)) accumulate(tp, ia, kernels::matmul_nt(g, tp.value_at(ib)));
    if (tp.requires_grad_at(ib)) accumulate(tp, ib, kernels::matmul_tn(tp.value_at(ia), g));
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Matrix out = kernels::matmul_nt(t.value(a), t.value(b));
  const std::size_t ia = a.index, ib = b.index;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    // c = a b^T: dA = g b, dB = g^T a
    if (tp.requires_grad_at(ia)) accumulate(tp, ia, kernels::matmul(g, tp.value_at(ib)));
    if (tp.requires_grad_at(ib)) accumulate(tp, ib, kernels::matmul_tn(g, tp.value_at(ia)));
  });
}

Var add(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) {
    throw DataError("add shape mismatch: " + va.shape_string() + " + " + vb.shape_string());
  }
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const std::size_t ia = a.index, ib = b.index;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    accumulate(tp, ia, g);
    accumulate(tp, ib, g);
  });
}

Var add_row_bias(Tape& t, Var a, Var bias) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(bias);
  if (vb.rows() != 1 || vb.cols() != va.cols()) {
    throw DataError("add_row_bias shape mismatch: " + va.shape_string() + " + " + vb.shape_string());
  }
  Matrix out = va;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vb(0, c);
  const std::size_t ia = a.index, ib = bias.index;
  return t.record(std::move(out), any_grad(t, {a, bias}), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    accumulate(tp, ia, g);
    if (tp.requires_grad_at(ib)) {
      Matrix gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      accumulate(tp, ib, gb);
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& v : out.values()) v *= s;
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a), [ia, s](Tape& tp, std::size_t self) {
    Matrix g = tp.grad_mut(self);
    for (double& v : g.values()) v *= s;
    accumulate(tp, ia, g);
  });
}

Var softmax_rows(Tape& t, Var a, double temperature) {
  Matrix out = kernels::softmax_rows(t.value(a), temperature);
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a), [ia, temperature](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value_at(self);
    const Matrix g = tp.grad_mut(self);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) = y(r, c) * (g(r, c) - dot) / temperature;
    }
    accumulate(tp, ia, dx);
  });
}

Var layer_norm_rows(Tape& t, Var a, double eps) {
  Matrix out = kernels::layer_norm_rows(t.value(a), eps);
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a), [ia, eps](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value_at(ia);
    const Matrix& y = tp.value_at(self);
    const Matrix g = tp.grad_mut(self);
    const double n = static_cast<double>(x.cols());
    Matrix dx(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      double mean = 0.0;
      for (double v : x.row(r)) mean += v;
      mean /= n;
      double var = 0.0;
      for (double v : x.row(r)) var += (v - mean) * (v - mean);
      var /= n;
      const double inv_std = 1.0 / std::sqrt(var + eps);
      double g_mean = 0.0, gy_mean = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        g_mean += g(r, c);
        gy_mean += g(r, c) * y(r, c);
      }
      g_mean /= n;
      gy_mean /= n;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        dx(r, c) = inv_std * (g(r, c) - g_mean - y(r, c) * gy_mean);
      }
    }
    accumulate(tp, ia, dx);
  });
}

Var dropout(Tape& t, Var a, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) {
    // Exact identity, still recorded so the graph shape is mode-independent.
    const std::size_t ia = a.index;
    return t.record(t.value(a), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
      accumulate(tp, ia, tp.grad_mut(self));
    });
  }
  const Matrix& va = t.value(a);
  Matrix mask = kernels::dropout_mask(va.rows(), va.cols(), p, rng);
  Matrix out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a),
                  [ia, mask = std::move(mask)](Tape& tp, std::size_t self) {
                    Matrix g = tp.grad_mut(self);
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask[i];
                    accumulate(tp, ia, g);
                  });
}

Var mean_pool_rows(Tape& t, Var a) {
  const Matrix& va = t.value(a);
  Matrix out = Matrix::row_vector(kernels::mean_pool_rows(va));
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a), [ia](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value_at(ia);
    const Matrix g = tp.grad_mut(self);
    const double inv = 1.0 / static_cast<double>(x.rows());
    Matrix dx(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < x.cols(); ++c) dx(r, c) = g(0, c) * inv;
    accumulate(tp, ia, dx);
  });
}

Var select_row(Tape& t, Var a, std::size_t r) {
  const Matrix& va = t.value(a);
  if (r >= va.rows()) {
    throw DataError("select_row " + std::to_string(r) + " out of range for " + va.shape_string());
  }
  Matrix out = Matrix::row_vector(va.row(r));
  const std::size_t ia = a.index;
  return t.record(std::move(out), t.requires_grad(a), [ia, r](Tape& tp, std::size_t self) {
    const Matrix& x = tp.value_at(ia);
    const Matrix g = tp.grad_mut(self);
    Matrix dx(x.rows(), x.cols());
    std::copy(g.values().begin(), g.values().end(), dx.row(r).begin());
    accumulate(tp, ia, dx);
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  const Matrix& va = t.value(a);
  const Matrix& vb = t.value(b);
  if (va.rows() != vb.rows()) {
    throw DataError("concat_cols row mismatch: " + va.shape_string() + " | " + vb.shape_string());
  }
  Matrix out(va.rows(), va.cols() + vb.cols());
  for (std::size_t r = 0; r < va.rows(); ++r) {
    std::copy(va.row(r).begin(), va.row(r).end(), out.row(r).begin());
    std::copy(vb.row(r).begin(), vb.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(va.cols()));
  }
  const std::size_t ia = a.index, ib = b.index;
  const std::size_t ca = va.cols(), cb = vb.cols();
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib, ca, cb](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    Matrix ga(g.rows(), ca), gb(g.rows(), cb);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < ca; ++c) ga(r, c) = g(r, c);
      for (std::size_t c = 0; c < cb; ++c) gb(r, c) = g(r, ca + c);
    }
    accumulate(tp, ia, ga);
    accumulate(tp, ib, gb);
  });
}

Var stack_rows(Tape& t, std::span<const Var> rows) {
  if (rows.empty()) throw DataError("stack_rows of zero rows");
  const std::size_t cols = t.value(rows.front()).cols();
  Matrix out(rows.size(), cols);
  std::vector<std::size_t> indices;
  bool needs_grad = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Matrix& v = t.value(rows[r]);
    if (v.rows() != 1 || v.cols() != cols) {
      throw DataError("stack_rows expects 1x" + std::to_string(cols) + " rows, got " + v.shape_string());
    }
    std::copy(v.values().begin(), v.values().end(), out.row(r).begin());
    indices.push_back(rows[r].index);
    needs_grad = needs_grad || t.requires_grad(rows[r]);
  }
  return t.record(std::move(out), needs_grad, [indices = std::move(indices)](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad_mut(self);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      accumulate(tp, indices[r], Matrix::row_vector(g.row(r)));
    }
  });
}

Var weighted_sum(Tape& t, Var a, const Matrix& weights) {
  const Matrix& va = t.value(a);
  if (weights.rows() != va.rows() || weights.cols() != va.cols()) {
    throw DataError("weighted_sum shape mismatch: " + va.shape_string() + " vs " + weights.shape_string());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) s += va[i] * weights[i];
  const std::size_t ia = a.index;
  return t.record(Matrix(1, 1, s), t.requires_grad(a), [ia, weights](Tape& tp, std::size_t self) {
    const double g = tp.grad_mut(self)[0];
    Matrix dx = weights;
    for (double& v : dx.values()) v *= g;
    accumulate(tp, ia, dx);
  });
}

Var soft_cross_entropy_mean(Tape& t, Var probs, const Matrix& targets, double floor) {
  const Matrix& p = t.value(probs);
  if (targets.rows() != p.rows() || targets.cols() != p.cols()) {
    throw DataError("soft_cross_entropy target shape " + targets.shape_string() +
                    " does not match probabilities " + p.shape_string());
  }
  if (p.rows() == 0) throw DataError("soft_cross_entropy over an empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double row_loss = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      if (targets(r, c) != 0.0) row_loss -= targets(r, c) * std::log(std::max(p(r, c), floor));
    }
    total += row_loss;
  }
  const double n = static_cast<double>(p.rows());
  const std::size_t ip = probs.index;
  return t.record(Matrix(1, 1, total / n), t.requires_grad(probs),
                  [ip, targets, floor, n](Tape& tp, std::size_t self) {
                    const double g = tp.grad_mut(self)[0];
                    const Matrix& pv = tp.value_at(ip);
                    Matrix dp(pv.rows(), pv.cols());
                    for (std::size_t i = 0; i < pv.size(); ++i) {
                      if (targets[i] != 0.0 && pv[i] > floor) dp[i] = -g * targets[i] / (pv[i] * n);
                    }
                    accumulate(tp, ip, dp);
                  });
}

}  // namespace pidistill
