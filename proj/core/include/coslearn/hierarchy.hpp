// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coslearn/tensor.hpp"

namespace coslearn {

struct NodeId {
  std::size_t index = 0;
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

/// Rooted class taxonomy. Classes are leaves, each mapped to a label index.
///
/// Immutable after construction and safe for concurrent reads.
class ClassHierarchy {
 public:
  /// Parses a `parent<TAB>child` edge list. Blank lines and lines starting
  /// with `#` are skipped. When `class_list` is given its order defines the
  /// label indices; otherwise leaves are sorted lexicographically.
  ///
  /// Throws CycleError, ForestError, DuplicateEdgeError, HierarchyError (multiple
  /// parents, class that is not a leaf) or FormatError.
  static ClassHierarchy parse(std::string_view text,
                              std::optional<std::vector<std::string>> class_list = std::nullopt);

  std::size_t num_nodes() const noexcept { return names_.size(); }
  std::size_t num_classes() const noexcept { return classes_.size(); }

  const std::string& name(NodeId n) const { return names_[n.index]; }
  std::optional<NodeId> find(std::string_view name) const;
  NodeId root() const noexcept { return root_; }
  std::optional<NodeId> parent(NodeId n) const;
  std::span<const NodeId> children(NodeId n) const { return children_[n.index]; }
  bool is_leaf(NodeId n) const { return children_[n.index].empty(); }

  /// Length of the longest downward path to a leaf.
  std::size_t height(NodeId n) const { return heights_[n.index]; }
  std::size_t depth(NodeId n) const { return depths_[n.index]; }
  /// Height of the root.
  std::size_t tree_height() const { return heights_[root_.index]; }

  /// Class names in label order.
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  NodeId class_node(std::size_t label) const { return classes_.at(label); }
  /// Label index of a class name; throws LookupError when unknown.
  std::size_t label_of(std::string_view class_name) const;

  NodeId lca(NodeId a, NodeId b) const;
  /// Lowest common ancestor of two classes; throws LookupError for a name that
  /// is not a class.
  NodeId lca(std::string_view class_a, std::string_view class_b) const;

  /// Edge list in the format accepted by parse(), parents before children.
  std::string to_edge_list() const;

 private:
  ClassHierarchy() = default;

  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::optional<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::size_t> heights_;
  std::vector<std::size_t> depths_;
  NodeId root_;
  std::vector<NodeId> classes_;
  std::vector<std::string> class_names_;
  std::unordered_map<std::string, std::size_t> labels_;
};

/// Reads one class name per line; line i (1-based) is label i-1.
std::vector<std::string> parse_class_list(std::string_view text);
std::vector<std::string> load_class_list(const std::filesystem::path& path);

ClassHierarchy load_hierarchy(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& class_list = std::nullopt);

/// Balanced tree with the given branching factor per level. Leaves are named
/// `c000`, `c001`, ... in depth-first order.
ClassHierarchy make_balanced_hierarchy(std::span<const std::size_t> branching);

/// Symmetric n x n class similarity with unit diagonal.
class SimilarityMatrix {
 public:
  SimilarityMatrix(Tensor values, std::vector<std::string> class_names);

  std::size_t size() const noexcept { return names_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values_.at(i, j); }
  const Tensor& values() const noexcept { return values_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

 private:
  Tensor values_;
  std::vector<std::string> names_;
};

/// s(a, b) = 1 - height(lca(a, b)) / H for H the tree height.
/// Throws HierarchyError for a degenerate tree (fewer than 2 classes).
SimilarityMatrix semantic_similarity(const ClassHierarchy& h);

/// CSV with a `class` header cell, class names as header row and first column.
void write_similarity_csv(std::ostream& out, const SimilarityMatrix& s);

}  // namespace coslearn
