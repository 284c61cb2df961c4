// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "coslearn/autodiff.hpp"
#include "coslearn/random.hpp"

namespace coslearn {

/// One differentiable computation to check. `build` maps parameter Vars to an
/// output; non-scalar outputs are contracted with a random fixed weighting.
struct GradCheckCase {
  std::string name;
  std::vector<Shape> inputs;
  std::function<Var(Tape&, std::span<const Var>)> build;
  /// Draws inputs for one trial; defaults to uniform(-1, 1). Use it to keep
  /// away from kinks (relu at 0) and from the domain edge of log.
  std::function<void(std::vector<Tensor>&, Rng&)> sample;
};

struct GradCheckResult {
  std::string name;
  std::size_t trials = 0;
  /// Worst relative error over trials: max |analytic - numeric| divided by
  /// max(max |analytic|, max |numeric|, 1e-8).
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::size_t trials = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

/// Central finite differences against Tape::backward.
GradCheckResult gradcheck_case(const GradCheckCase& c, const GradCheckOptions& opt = {});

/// Every op and every loss, plus a small MLP under the cosine loss.
std::vector<GradCheckCase> standard_gradcheck_cases();

}  // namespace coslearn
