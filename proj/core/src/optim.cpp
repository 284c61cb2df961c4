// SPDX-License-Identifier: Apache-2.0
#include "coslearn/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "coslearn/error.hpp"
#include "coslearn/io.hpp"

namespace coslearn {

void SgdrSchedule::validate() const {
  if (!(lr_max > 0.0) || !std::isfinite(lr_max)) {
    throw ValidationError("lr_max must be positive, got " + format_double(lr_max));
  }
  if (!(lr_min >= 0.0) || lr_min > lr_max) {
    throw ValidationError("lr_min must lie in [0, lr_max], got " + format_double(lr_min));
  }
  if (base_cycle_epochs < 1) throw ValidationError("base cycle length must be at least 1 epoch");
  if (num_cycles < 1 || num_cycles > 30) throw ValidationError("number of cycles must lie in [1, 30]");
}

int SgdrSchedule::total_epochs() const { return base_cycle_epochs * ((1 << num_cycles) - 1); }

std::vector<int> SgdrSchedule::cycle_boundaries() const {
  std::vector<int> out;
  int end = 0;
  for (int c = 0; c < num_cycles; ++c) {
    end += base_cycle_epochs << c;
    out.push_back(end);
  }
  return out;
}

SgdrSchedule SgdrSchedule::profile(std::string_view name, double lr_max) {
  SgdrSchedule s;
  s.lr_max = lr_max;
  if (name == "paper") {
    s.base_cycle_epochs = 12;
    s.num_cycles = 5;
  } else if (name == "quick") {
    s.base_cycle_epochs = 2;
    s.num_cycles = 4;
  } else if (name == "smoke") {
    s.base_cycle_epochs = 1;
    s.num_cycles = 3;
  } else {
    throw LookupError("unknown schedule profile '" + std::string(name) + "'");
  }
  return s;
}

double lr_in_cycle(const SgdrSchedule& s, int cycle, double t) {
  if (cycle < 0 || cycle >= s.num_cycles) {
    throw ValidationError("cycle " + std::to_string(cycle) + " outside schedule");
  }
  const double length = static_cast<double>(s.base_cycle_epochs << cycle);
  if (!(t >= 0.0 && t <= length)) throw ValidationError("cycle offset outside cycle");
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t / length));
}

double lr_at_position(const SgdrSchedule& s, double epoch_position) {
  if (!(epoch_position >= 0.0) || epoch_position > static_cast<double>(s.total_epochs())) {
    throw ValidationError("epoch position " + format_double(epoch_position) +
                          " outside schedule of " + std::to_string(s.total_epochs()) + " epochs");
  }
  double start = 0.0;
  double length = static_cast<double>(s.base_cycle_epochs);
  for (int c = 0; c + 1 < s.num_cycles && epoch_position >= start + length; ++c) {
    start += length;
    length *= 2.0;
  }
  const double t = epoch_position - start;
  return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t / length));
}

double lr_at(const SgdrSchedule& s, int epoch_index, std::size_t step_in_epoch,
             std::size_t steps_per_epoch) {
  if (epoch_index < 0 || epoch_index >= s.total_epochs()) {
    throw ValidationError("epoch " + std::to_string(epoch_index) + " beyond schedule end (" +
                          std::to_string(s.total_epochs()) + " epochs)");
  }
  if (steps_per_epoch == 0 || step_in_epoch >= steps_per_epoch) {
    throw ValidationError("step " + std::to_string(step_in_epoch) + " outside epoch of " +
                          std::to_string(steps_per_epoch) + " steps");
  }
  // Locate the cycle on integer epochs so that a cycle start is exact.
  int start = 0;
  int length = s.base_cycle_epochs;
  while (epoch_index >= start + length) {
    start += length;
    length *= 2;
  }
  const double t = static_cast<double>(epoch_index - start) +
                   static_cast<double>(step_in_epoch) / static_cast<double>(steps_per_epoch);
  return s.lr_min +
         0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(length)));
}

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_gradients(std::span<Tensor> grads, const ClipSpec& c) {
  if (!(c.max_norm > 0.0)) throw ValidationError("clip max_norm must be positive");
  for (const Tensor& g : grads) {
    if (!g.all_finite()) throw DivergenceError("non-finite gradient");
  }
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw DivergenceError("gradient norm overflow");
  if (norm > c.max_norm) {
    const double factor = c.max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= factor;
    }
  }
  return norm;
}

Sgd::Sgd(double momentum) : momentum_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
}

void Sgd::step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
  if (params.size() != grads.size()) {
    throw DimensionError(std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape()) {
      throw DimensionError("sgd_step: parameter " + shape_to_string(params[i]->shape()) +
                           " vs gradient " + shape_to_string(grads[i].shape()));
    }
  }
  if (momentum_ == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i]->data();
      auto g = grads[i].data();
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
    return;
  }
  if (velocity_.empty()) {
    for (const Tensor& g : grads) velocity_.emplace_back(g.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto v = velocity_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = momentum_ * v[j] + g[j];
      p[j] -= lr * v[j];
    }
  }
}

std::vector<Tensor*> parameter_tensors(ModelState& m) {
  std::vector<Tensor*> out;
  for (auto& l : m.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

ModelState sgd_step(ModelState state, std::span<const Tensor> grads, double lr) {
  Sgd sgd;
  auto params = parameter_tensors(state);
  sgd.step(params, grads, lr);
  return state;
}

}  // namespace coslearn
