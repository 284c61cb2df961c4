// SPDX-License-Identifier: Apache-2.0
#include "coslearn/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "coslearn/error.hpp"
#include "coslearn/io.hpp"

namespace coslearn {

namespace {
constexpr double kPsdTolerance = 1e-9;
constexpr double kPivotFloor = 1e-12;
}  // namespace

std::string_view to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::onehot ? "onehot" : "semantic";
}

EmbeddingKind parse_embedding_kind(std::string_view name) {
  if (name == "onehot") return EmbeddingKind::onehot;
  if (name == "semantic") return EmbeddingKind::semantic;
  throw LookupError("unknown embedding kind '" + std::string(name) + "'");
}

EmbeddingMatrix::EmbeddingMatrix(Tensor matrix, std::vector<std::string> class_names,
                                 EmbeddingKind kind)
    : matrix_(std::move(matrix)), names_(std::move(class_names)), kind_(kind) {
  if (matrix_.rank() != 2) {
    throw DimensionError("embedding matrix must be rank 2, got " +
                         shape_to_string(matrix_.shape()));
  }
  if (names_.empty()) {
    for (std::size_t i = 0; i < matrix_.rows(); ++i) names_.push_back(std::to_string(i + 1));
  }
  if (names_.size() != matrix_.rows()) {
    throw DimensionError(std::to_string(names_.size()) + " class names for " +
                         std::to_string(matrix_.rows()) + " embedding rows");
  }
}

Tensor EmbeddingMatrix::gather(std::span<const std::size_t> labels) const {
  Tensor out(Shape{labels.size(), dim()});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes()) {
      throw LabelError("label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(num_classes()) + " classes");
    }
    std::copy_n(row(labels[i]).begin(), dim(), out.row(i).begin());
  }
  return out;
}

EmbeddingMatrix onehot_embeddings(std::size_t n, std::vector<std::string> class_names) {
  if (n < 2) throw ValidationError("one-hot embeddings need at least 2 classes, got " + std::to_string(n));
  return EmbeddingMatrix(Tensor::identity(n), std::move(class_names), EmbeddingKind::onehot);
}

EmbeddingMatrix semantic_embeddings(const SimilarityMatrix& s) {
  const std::size_t n = s.size();
  Tensor e(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      double v = s(j, i);
      for (std::size_t m = 0; m < j; ++m) v -= e.at(i, m) * e.at(j, m);
      const double pivot = e.at(j, j);
      if (pivot < kPivotFloor) {
        // Row j is spanned by earlier rows; consistency needs v == 0.
        if (std::abs(v) > kPsdTolerance) {
          throw NotPsdError("similarity matrix is not positive semidefinite at class '" +
                            s.class_names()[i] + "'");
        }
        v = 0.0;
      } else {
        v /= pivot;
      }
      e.at(i, j) = v;
      sq += v * v;
    }
    double residual = 1.0 - sq;
    if (residual < -kPsdTolerance) {
      throw NotPsdError("similarity matrix is not positive semidefinite at class '" +
                        s.class_names()[i] + "' (residual " + format_double(residual) + ")");
    }
    e.at(i, i) = std::sqrt(std::max(residual, 0.0));
  }
  return EmbeddingMatrix(std::move(e), s.class_names(), EmbeddingKind::semantic);
}

EmbeddingDeviation verify_embeddings(const EmbeddingMatrix& e, const SimilarityMatrix& s) {
  if (e.num_classes() != s.size()) {
    throw DimensionError(std::to_string(e.num_classes()) + " embeddings vs " +
                         std::to_string(s.size()) + "x" + std::to_string(s.size()) +
                         " similarity matrix");
  }
  EmbeddingDeviation dev;
  for (std::size_t i = 0; i < e.num_classes(); ++i) {
    dev.max_norm_deviation = std::max(dev.max_norm_deviation, std::abs(l2_norm(e.row(i)) - 1.0));
    for (std::size_t j = 0; j < e.num_classes(); ++j) {
      const double g = dot(e.row(i), e.row(j));
      dev.max_gram_deviation = std::max(dev.max_gram_deviation, std::abs(g - s(i, j)));
    }
  }
  return dev;
}

std::string embeddings_to_csv(const EmbeddingMatrix& e) {
  std::string out = "class";
  for (std::size_t j = 0; j < e.dim(); ++j) out += ",e" + std::to_string(j + 1);
  out += '\n';
  for (std::size_t i = 0; i < e.num_classes(); ++i) {
    out += e.class_names()[i];
    for (double v : e.row(i)) out += "," + format_double(v);
    out += '\n';
  }
  return out;
}

void save_embeddings_csv(const std::filesystem::path& path, const EmbeddingMatrix& e) {
  write_text_file(path, embeddings_to_csv(e));
}

EmbeddingMatrix load_embeddings_csv(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  auto lines = lines_of(text);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 2) throw FormatError(path.string() + ": no embedding rows");
  const std::size_t width = split(lines[0], ',').size();
  if (width < 2) throw FormatError(path.string() + ": header has no embedding columns");
  std::vector<std::string> names;
  std::vector<double> data;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != width) {
      throw FormatError(path.string() + ": line " + std::to_string(i + 1) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(width));
    }
    names.emplace_back(fields[0]);
    for (std::size_t j = 1; j < width; ++j) data.push_back(parse_double(fields[j], "embedding value"));
  }
  Tensor m(Shape{names.size(), width - 1}, std::move(data));
  bool onehot = m.rows() == m.cols();
  for (std::size_t i = 0; onehot && i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (m.at(i, j) != (i == j ? 1.0 : 0.0)) {
        onehot = false;
        break;
      }
    }
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (std::abs(l2_norm(m.row(i)) - 1.0) > 1e-9) {
      throw FormatError(path.string() + ": embedding for '" + names[i] + "' is not unit-norm");
    }
  }
  return EmbeddingMatrix(std::move(m), std::move(names),
                         onehot ? EmbeddingKind::onehot : EmbeddingKind::semantic);
}

}  // namespace coslearn
