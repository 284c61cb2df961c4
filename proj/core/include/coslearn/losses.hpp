// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "coslearn/autodiff.hpp"
#include "coslearn/embeddings.hpp"
#include "coslearn/random.hpp"
#include "coslearn/tensor.hpp"

namespace coslearn {

enum class LossKind { cosine, cross_entropy, mse, cosine_plus_xent };

std::string_view to_string(LossKind kind);
/// Accepts `cosine`, `cross_entropy` (or `xent`), `mse`, `cosine_xent` (or
/// `cosine_plus_xent`). Throws LookupError otherwise.
LossKind parse_loss_kind(std::string_view name);

/// Whether the loss compares features against class embeddings (as opposed to
/// treating the network output as logits).
constexpr bool uses_embeddings(LossKind kind) noexcept { return kind != LossKind::cross_entropy; }

struct LossSpec {
  LossKind kind = LossKind::cosine;
  /// Label smoothing: the true class gets 1 - eps, the others eps / (n - 1).
  double label_smoothing = 0.0;
  /// Weight of the cross-entropy term in cosine_plus_xent.
  double lambda = 0.1;
  std::size_t num_classes = 2;

  /// Throws ValidationError unless 0 <= eps < 1, lambda >= 0 and n >= 2.
  void validate() const;
};

/// Auxiliary softmax classifier g applied to normalized features.
struct AuxHead {
  Tensor weight;  ///< d x n
  Tensor bias;    ///< n

  /// Uniform weights in [-1/sqrt(d), 1/sqrt(d)], zero bias.
  static AuxHead init(std::size_t dim, std::size_t num_classes, Rng& rng);
};

/// <a, b> / (|a| |b|). Throws DegenerateVectorError for a zero-norm operand.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Target distribution rows for labels under label smoothing.
Tensor smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes, double eps);

/// Batch mean of 1 - <target_i, f_i / |f_i|>. Targets must be unit rows with
/// the same shape as the features.
Var cosine_loss(Var features, const Tensor& targets);

/// Batch mean of -<target distribution, log softmax(logits)>.
Var cross_entropy_loss(Var logits, std::span<const std::size_t> labels, double eps = 0.0);
Var cross_entropy_loss(Var logits, const Tensor& target_distribution);

/// Batch mean of |f_i - target_i|^2.
Var mse_loss(Var features, const Tensor& targets);

/// Cosine term against the label embeddings plus lambda times cross-entropy
/// of the head applied to the normalized features.
Var cosine_plus_xent_loss(Var features, std::span<const std::size_t> labels,
                          const EmbeddingMatrix& embeddings, Var head_weight, Var head_bias,
                          double lambda, double eps = 0.0);

/// Dispatches on spec.kind. `embeddings` is ignored for cross_entropy; the
/// head Vars are used only by cosine_plus_xent.
Var compute_loss(const LossSpec& spec, Var output, std::span<const std::size_t> labels,
                 const EmbeddingMatrix* embeddings, const Var* head_weight = nullptr,
                 const Var* head_bias = nullptr);

struct GridBounds {
  double x_min = -2.0;
  double x_max = 2.0;
  double y_min = -2.0;
  double y_max = 2.0;
};

struct SurfaceCell {
  double x = 0.0;
  double y = 0.0;
  double loss = 0.0;  ///< NaN where the loss is undefined
};

/// Loss evaluated over a resolution x resolution grid of 2-D features against
/// a fixed unit target; cross-entropy treats the target's argmax as the label.
/// Grid coordinates are lo + (hi - lo) * i / (resolution - 1).
std::vector<SurfaceCell> loss_surface_grid(const LossSpec& spec, std::span<const double> target,
                                           const GridBounds& bounds, std::size_t resolution);

/// CSV with header `x,y,loss`; undefined cells print as `nan`.
void write_surface_csv(std::ostream& out, std::span<const SurfaceCell> cells);

}  // namespace coslearn
