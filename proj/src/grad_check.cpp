#include "pidistill/grad_check.hpp"

#include <cmath>

#include "pidistill/error.hpp"
#include "pidistill/rng.hpp"

namespace pidistill {

namespace {

struct Evaluation {
  double value = 0.0;
  std::vector<Matrix> grads;
};

Evaluation evaluate(const GradCheckFn& fn, const std::vector<Matrix>& inputs, Matrix* weights,
                    std::uint64_t seed, bool with_grad) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Matrix& m : inputs) vars.push_back(tape.parameter(m));
  const Var out = fn(tape, vars);
  if (weights->empty()) {
    const Matrix& v = tape.value(out);
    *weights = Matrix(v.rows(), v.cols());
    Rng rng = Rng::stream(seed, "grad_check");
    for (double& w : weights->values()) w = rng.uniform() * 2.0 - 1.0;
  }
  const Var loss = weighted_sum(tape, out, *weights);
  Evaluation e;
  e.value = tape.value(loss)[0];
  if (with_grad) {
    tape.backward(loss);
    for (Var v : vars) e.grads.push_back(tape.grad(v));
  }
  return e;
}

std::string where(std::size_t input, const Matrix& m, std::size_t i) {
  return "input " + std::to_string(input) + " (" + std::to_string(i / m.cols()) + ", " +
         std::to_string(i % m.cols()) + ")";
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Matrix>& inputs, double eps,
                           std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) {
    throw ConfigError("grad_check epsilon must lie in [1e-6, 1e-4]");
  }
  GradCheckReport report;
  Matrix weights;
  const Evaluation base = evaluate(fn, inputs, &weights, seed, true);
  if (!std::isfinite(base.value)) {
    report.finite = false;
    report.location = "forward output";
    return report;
  }
  std::vector<Matrix> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double analytic = base.grads[k][i];
      if (!std::isfinite(analytic)) {
        report.finite = false;
        report.location = where(k, inputs[k], i) + " analytic gradient";
        return report;
      }
      probe[k][i] = inputs[k][i] + eps;
      const double up = evaluate(fn, probe, &weights, seed, false).value;
      probe[k][i] = inputs[k][i] - eps;
      const double down = evaluate(fn, probe, &weights, seed, false).value;
      probe[k][i] = inputs[k][i];
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.finite = false;
        report.location = where(k, inputs[k], i) + " perturbed forward";
        return report;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_error || report.location.empty()) {
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.location = where(k, inputs[k], i);
        }
      }
    }
  }
  return report;
}

}  // namespace pidistill
