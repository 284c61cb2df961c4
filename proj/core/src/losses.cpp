// SPDX-License-Identifier: Apache-2.0
#include "coslearn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coslearn/error.hpp"
#include "coslearn/io.hpp"

namespace coslearn {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::cosine:
      return "cosine";
    case LossKind::cross_entropy:
      return "cross_entropy";
    case LossKind::mse:
      return "mse";
    case LossKind::cosine_plus_xent:
      return "cosine_xent";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "cosine") return LossKind::cosine;
  if (name == "cross_entropy" || name == "xent") return LossKind::cross_entropy;
  if (name == "mse") return LossKind::mse;
  if (name == "cosine_xent" || name == "cosine_plus_xent") return LossKind::cosine_plus_xent;
  throw LookupError("unknown loss '" + std::string(name) + "'");
}

void LossSpec::validate() const {
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ValidationError("label smoothing must lie in [0, 1), got " + format_double(label_smoothing));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("lambda must be a finite nonnegative number, got " + format_double(lambda));
  }
  if (num_classes < 2) {
    throw ValidationError("a loss needs at least 2 classes, got " + std::to_string(num_classes));
  }
}

AuxHead AuxHead::init(std::size_t dim, std::size_t num_classes, Rng& rng) {
  AuxHead head{Tensor(Shape{dim, num_classes}), Tensor(Shape{num_classes})};
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& w : head.weight.data()) w = rng.uniform(-bound, bound);
  return head;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na > kNormalizeEps) || !(nb > kNormalizeEps)) {
    throw DegenerateVectorError("cosine similarity of a zero-norm vector");
  }
  return dot(a, b) / (na * nb);
}

Tensor smoothed_targets(std::span<const std::size_t> labels, std::size_t num_classes, double eps) {
  if (num_classes < 2) throw ValidationError("label smoothing needs at least 2 classes");
  const double off = eps / static_cast<double>(num_classes - 1);
  Tensor t(Shape{labels.size(), num_classes}, off);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw LabelError("label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(num_classes) + " classes");
    }
    t.at(i, labels[i]) = 1.0 - eps;
  }
  return t;
}

namespace {

void require_batch_matrix(const char* what, const Tensor& features, const Tensor& targets) {
  if (features.rank() != 2 || features.shape() != targets.shape()) {
    throw DimensionError(std::string(what) + ": features " + shape_to_string(features.shape()) +
                         " vs targets " + shape_to_string(targets.shape()));
  }
}

/// 1 - <targets, normalized> / batch, shared so every cosine path agrees bitwise.
Var cosine_term(Var normalized, const Tensor& targets) {
  const double batch = static_cast<double>(targets.rows());
  Var t = normalized.tape().constant(targets);
  return ops::add_scalar(ops::scale(ops::dot(normalized, t), -1.0 / batch), 1.0);
}

}  // namespace

Var cosine_loss(Var features, const Tensor& targets) {
  require_batch_matrix("cosine_loss", features.value(), targets);
  return cosine_term(ops::l2_normalize(features), targets);
}

Var cross_entropy_loss(Var logits, const Tensor& target_distribution) {
  require_batch_matrix("cross_entropy_loss", logits.value(), target_distribution);
  const double batch = static_cast<double>(target_distribution.rows());
  Var t = logits.tape().constant(target_distribution);
  return ops::scale(ops::dot(t, ops::log_softmax(logits)), -1.0 / batch);
}

Var cross_entropy_loss(Var logits, std::span<const std::size_t> labels, double eps) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.rows() != labels.size()) {
    throw DimensionError("cross_entropy_loss: logits " + shape_to_string(z.shape()) + " for " +
                         std::to_string(labels.size()) + " labels");
  }
  return cross_entropy_loss(logits, smoothed_targets(labels, z.cols(), eps));
}

Var mse_loss(Var features, const Tensor& targets) {
  require_batch_matrix("mse_loss", features.value(), targets);
  const double batch = static_cast<double>(targets.rows());
  Var diff = ops::sub(features, features.tape().constant(targets));
  return ops::scale(ops::dot(diff, diff), 1.0 / batch);
}

Var cosine_plus_xent_loss(Var features, std::span<const std::size_t> labels,
                          const EmbeddingMatrix& embeddings, Var head_weight, Var head_bias,
                          double lambda, double eps) {
  const Tensor targets = embeddings.gather(labels);
  require_batch_matrix("cosine_plus_xent_loss", features.value(), targets);
  const Tensor& w = head_weight.value();
  if (w.rank() != 2 || w.rows() != embeddings.dim() || w.cols() != embeddings.num_classes()) {
    throw DimensionError("cosine_plus_xent_loss: head weight " + shape_to_string(w.shape()) +
                         " does not map " + std::to_string(embeddings.dim()) + " features to " +
                         std::to_string(embeddings.num_classes()) + " classes");
  }
  Var normalized = ops::l2_normalize(features);
  Var cos = cosine_term(normalized, targets);
  Var logits = ops::linear(normalized, head_weight, head_bias);
  Var xent = cross_entropy_loss(logits, labels, eps);
  return ops::add(cos, ops::scale(xent, lambda));
}

Var compute_loss(const LossSpec& spec, Var output, std::span<const std::size_t> labels,
                 const EmbeddingMatrix* embeddings, const Var* head_weight,
                 const Var* head_bias) {
  if (spec.kind == LossKind::cross_entropy) {
    return cross_entropy_loss(output, labels, spec.label_smoothing);
  }
  if (embeddings == nullptr) {
    throw ValidationError(std::string(to_string(spec.kind)) + " loss needs class embeddings");
  }
  switch (spec.kind) {
    case LossKind::cosine:
      return cosine_loss(output, embeddings->gather(labels));
    case LossKind::mse:
      return mse_loss(output, embeddings->gather(labels));
    case LossKind::cosine_plus_xent:
      if (head_weight == nullptr || head_bias == nullptr) {
        throw ValidationError("cosine_xent loss needs an auxiliary head");
      }
      return cosine_plus_xent_loss(output, labels, *embeddings, *head_weight, *head_bias,
                                   spec.lambda, spec.label_smoothing);
    case LossKind::cross_entropy:
      break;
  }
  throw std::logic_error("unreachable loss kind");
}

std::vector<SurfaceCell> loss_surface_grid(const LossSpec& spec, std::span<const double> target,
                                           const GridBounds& bounds, std::size_t resolution) {
  if (target.size() != 2) {
    throw DimensionError("loss surface needs a 2-D target, got " + std::to_string(target.size()));
  }
  if (resolution < 2) throw ValidationError("surface resolution must be at least 2");
  if (spec.kind == LossKind::cosine_plus_xent) {
    throw ValidationError("loss surface is defined for cosine, cross_entropy and mse only");
  }
  const Tensor target_row(Shape{1, 2}, {target[0], target[1]});
  const std::size_t label = target[1] > target[0] ? 1 : 0;
  const std::size_t labels[1] = {label};
  const double steps = static_cast<double>(resolution - 1);

  std::vector<SurfaceCell> cells;
  cells.reserve(resolution * resolution);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    const double y = bounds.y_min + (bounds.y_max - bounds.y_min) * static_cast<double>(iy) / steps;
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      const double x = bounds.x_min + (bounds.x_max - bounds.x_min) * static_cast<double>(ix) / steps;
      Tape tape;
      Var f = tape.constant(Tensor(Shape{1, 2}, {x, y}));
      double value = std::numeric_limits<double>::quiet_NaN();
      try {
        switch (spec.kind) {
          case LossKind::cosine:
            value = cosine_loss(f, target_row).value().item();
            break;
          case LossKind::mse:
            value = mse_loss(f, target_row).value().item();
            break;
          case LossKind::cross_entropy:
            value = cross_entropy_loss(f, labels, spec.label_smoothing).value().item();
            break;
          case LossKind::cosine_plus_xent:
            break;
        }
      } catch (const DegenerateVectorError&) {
        // Direction of the zero vector is undefined; leave the cell NaN.
      }
      cells.push_back({x, y, value});
    }
  }
  return cells;
}

void write_surface_csv(std::ostream& out, std::span<const SurfaceCell> cells) {
  out << "x,y,loss\n";
  for (const SurfaceCell& c : cells) {
    out << format_double(c.x) << ',' << format_double(c.y) << ',' << format_double(c.loss) << '\n';
  }
}

}  // namespace coslearn
