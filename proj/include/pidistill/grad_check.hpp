#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pidistill/matrix.hpp"
#include "pidistill/tape.hpp"

namespace pidistill {

/// Builds a graph from the given input vars (registered as parameters) and
/// returns its output. Must be deterministic across calls: any Rng it uses
/// should be copied fresh inside the function.
using GradCheckFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool finite = true;
  /// "input <i> (<r>, <c>)" of the worst entry, or of the first non-finite value.
  std::string location;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients against central differences. Outputs of
/// any shape are reduced to a scalar by a fixed random weighting, so every
/// output entry contributes. Error per entry is
/// |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Matrix>& inputs,
                           double eps = 1e-5, std::uint64_t seed = 7);

}  // namespace pidistill
