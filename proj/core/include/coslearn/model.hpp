// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "coslearn/autodiff.hpp"
#include "coslearn/losses.hpp"
#include "coslearn/tensor.hpp"

namespace coslearn {

/// Multilayer perceptron shape. Hidden layers use relu; the output layer is
/// affine with no activation, since each loss applies its own transform.
struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_layers;
  std::size_t output_dim = 0;
  std::uint64_t seed = 0;

  /// Throws ValidationError on a zero-width layer.
  void validate() const;
};

struct DenseLayer {
  Tensor weight;  ///< fan_in x fan_out
  Tensor bias;    ///< fan_out
};

struct ModelState {
  MlpConfig config;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const ModelState& a, const ModelState& b);
};

/// Glorot-uniform weights, zero biases; deterministic per config.seed.
ModelState init_model(const MlpConfig& cfg);

/// Model parameters registered on a tape, in layer order (w0, b0, w1, b1, ...).
struct BoundModel {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

BoundModel bind_parameters(const ModelState& m, Tape& tape);
/// Parameters as constants (no gradients), for evaluation.
BoundModel bind_constants(const ModelState& m, Tape& tape);

/// Affine + relu chain; throws DimensionError when x's width differs from the
/// configured input dimension.
Var forward(const BoundModel& m, Var x);

/// Forward pass without recording, for inference.
Tensor predict(const ModelState& m, const Tensor& x);

/// Binary checkpoint: magic `CSLMODEL`, format version, config echo, then each
/// tensor as rank, dims and little-endian float64 data. An optional auxiliary
/// head follows the layers.
void save_checkpoint(const std::filesystem::path& path, const ModelState& m,
                     const AuxHead* head = nullptr);

struct Checkpoint {
  ModelState model;
  std::optional<AuxHead> head;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace coslearn
