// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coslearn/hierarchy.hpp"
#include "coslearn/tensor.hpp"

namespace coslearn {

enum class EmbeddingKind { onehot, semantic };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view name);

/// n x d matrix of unit-norm class embeddings; row i belongs to label i.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(Tensor matrix, std::vector<std::string> class_names, EmbeddingKind kind);

  std::size_t num_classes() const { return matrix_.rows(); }
  std::size_t dim() const { return matrix_.cols(); }
  std::span<const double> row(std::size_t label) const { return matrix_.row(label); }
  const Tensor& matrix() const noexcept { return matrix_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  EmbeddingKind kind() const noexcept { return kind_; }

  /// Embedding rows for a batch of labels, shape (labels.size() x dim).
  /// Throws LabelError for an out-of-range label.
  Tensor gather(std::span<const std::size_t> labels) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  Tensor matrix_;
  std::vector<std::string> names_;
  EmbeddingKind kind_;
};

/// Standard basis rows. Throws ValidationError for n < 2.
EmbeddingMatrix onehot_embeddings(std::size_t n, std::vector<std::string> class_names = {});

/// Rows whose pairwise dot products reproduce `s`, built as the lower
/// triangular Cholesky factor of s (d = n).
///
/// Row i takes the first i coordinates from the triangular solve against
/// rows 0..i-1, and coordinate i = sqrt(1 - sum of squares). A negative
/// residual below -1e-9 raises NotPsdError naming the class; residuals in
/// [-1e-9, 0] are clamped to 0.
EmbeddingMatrix semantic_embeddings(const SimilarityMatrix& s);

struct EmbeddingDeviation {
  double max_gram_deviation = 0.0;  ///< max |E E^T - S|
  double max_norm_deviation = 0.0;  ///< max | ||row|| - 1 |
};

EmbeddingDeviation verify_embeddings(const EmbeddingMatrix& e, const SimilarityMatrix& s);

/// CSV with header `class,e1,...,ed` and one row per class.
void save_embeddings_csv(const std::filesystem::path& path, const EmbeddingMatrix& e);
/// Reads the format written by save_embeddings_csv. The kind is onehot when
/// every row is a standard basis vector, semantic otherwise.
EmbeddingMatrix load_embeddings_csv(const std::filesystem::path& path);
std::string embeddings_to_csv(const EmbeddingMatrix& e);

}  // namespace coslearn
