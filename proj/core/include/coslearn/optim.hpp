// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "coslearn/model.hpp"
#include "coslearn/tensor.hpp"

namespace coslearn {

/// Cosine annealing with warm restarts. Cycle c (0-based) lasts
/// base_cycle_epochs * 2^c epochs; the learning rate restarts at lr_max at
/// the start of each cycle and anneals to lr_min at its end.
struct SgdrSchedule {
  double lr_max = 0.1;
  double lr_min = 1e-6;
  int base_cycle_epochs = 12;
  int num_cycles = 5;

  void validate() const;
  /// base * (2^num_cycles - 1); 372 for the defaults.
  int total_epochs() const;
  /// Cumulative epoch index at which each cycle ends.
  std::vector<int> cycle_boundaries() const;

  /// Named profiles: `paper` (12 x 5 cycles, 372 epochs), `quick` (2 x 4,
  /// 30 epochs) and `smoke` (1 x 3, 7 epochs).
  static SgdrSchedule profile(std::string_view name, double lr_max);
};

/// Learning rate at a continuous position inside the schedule:
/// lr_min + (lr_max - lr_min) (1 + cos(pi t / T)) / 2 with t the position in
/// the current cycle (epoch plus step fraction) and T the cycle length.
/// Throws ValidationError when epoch_index is past the end of the schedule.
double lr_at(const SgdrSchedule& s, int epoch_index, std::size_t step_in_epoch,
             std::size_t steps_per_epoch);

/// Learning rate at an absolute fractional epoch in [0, total_epochs]. An
/// exact cycle boundary counts as the restart of the next cycle, except for
/// the end of the last cycle.
double lr_at_position(const SgdrSchedule& s, double epoch_position);

/// Closed form within cycle `cycle` at offset t in [0, cycle length].
double lr_in_cycle(const SgdrSchedule& s, int cycle, double t);

struct ClipSpec {
  double max_norm = 10.0;
};

/// Global L2 norm over all gradient tensors.
double global_norm(std::span<const Tensor> grads);

/// Rescales all gradients by max_norm / norm when the global norm exceeds
/// max_norm. Returns the norm before clipping. Throws DivergenceError on a
/// non-finite gradient.
double clip_gradients(std::span<Tensor> grads, const ClipSpec& c);

/// Stochastic gradient descent. With momentum 0 (the default) the update is
/// exactly theta <- theta - lr * grad.
class Sgd {
 public:
  explicit Sgd(double momentum = 0.0);

  /// Updates params in place. Throws DimensionError on a shape mismatch.
  void step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

  double momentum() const noexcept { return momentum_; }

 private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

/// Plain SGD update on a model. Gradients follow the order of
/// bind_parameters (w0, b0, w1, b1, ...).
ModelState sgd_step(ModelState state, std::span<const Tensor> grads, double lr);

/// Pointers to the trainable tensors in bind_parameters order.
std::vector<Tensor*> parameter_tensors(ModelState& m);

}  // namespace coslearn
