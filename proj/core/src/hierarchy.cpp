// SPDX-License-Identifier: Apache-2.0
#include "coslearn/hierarchy.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <utility>

#include "coslearn/error.hpp"
#include "coslearn/io.hpp"

namespace coslearn {

namespace {

std::string checked_name(std::string_view raw, std::size_t line_no) {
  if (trim(raw).empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": empty or whitespace-only name");
  }
  return std::string(raw);
}

}  // namespace

ClassHierarchy ClassHierarchy::parse(std::string_view text,
                                     std::optional<std::vector<std::string>> class_list) {
  ClassHierarchy h;
  auto intern = [&h](const std::string& name) {
    auto [it, inserted] = h.index_.try_emplace(name, h.names_.size());
    if (inserted) {
      h.names_.push_back(name);
      h.parents_.emplace_back();
      h.children_.emplace_back();
    }
    return it->second;
  };

  std::set<std::pair<std::size_t, std::size_t>> edges;
  const auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    if (trim(line).empty() || line.front() == '#') continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2) {
      throw FormatError("line " + std::to_string(i + 1) + ": expected 'parent<TAB>child', got '" +
                        std::string(line) + "'");
    }
    const std::size_t p = intern(checked_name(fields[0], i + 1));
    const std::size_t c = intern(checked_name(fields[1], i + 1));
    if (!edges.emplace(p, c).second) {
      throw DuplicateEdgeError("duplicate edge " + h.names_[p] + " -> " + h.names_[c] +
                               " (line " + std::to_string(i + 1) + ")");
    }
    if (p == c) throw CycleError("cycle: " + h.names_[p] + " -> " + h.names_[p]);
    if (h.parents_[c] && h.parents_[c]->index != p) {
      throw HierarchyError("node " + h.names_[c] + " has multiple parents (" +
                           h.names_[h.parents_[c]->index] + ", " + h.names_[p] + ")");
    }
    h.parents_[c] = NodeId{p};
    h.children_[p].push_back(NodeId{c});
  }
  if (h.names_.empty()) throw FormatError("hierarchy has no edges");

  const std::size_t n = h.names_.size();

  // Every node has at most one parent, so a node that cannot reach a root by
  // following parents sits on or below a cycle.
  std::vector<int> state(n, 0);  // 0 unvisited, 1 on current walk, 2 reaches a root
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<std::size_t> walk;
    std::size_t cur = start;
    while (state[cur] == 0) {
      state[cur] = 1;
      walk.push_back(cur);
      if (!h.parents_[cur]) break;
      cur = h.parents_[cur]->index;
    }
    if (state[cur] == 1 && h.parents_[cur]) {
      // cur was revisited on this walk. walk[k + 1] is the parent of walk[k],
      // so the loop in parent -> child order is cur, walk.back(), ..., cur.
      auto it = std::find(walk.begin(), walk.end(), cur);
      std::string witness = h.names_[cur];
      for (auto w = walk.rbegin(); w.base() != it; ++w) witness += " -> " + h.names_[*w];
      throw CycleError("cycle: " + witness);
    }
    for (std::size_t w : walk) state[w] = 2;
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    if (!h.parents_[i]) roots.push_back(i);
  }
  if (roots.size() != 1) {
    std::string names;
    for (std::size_t r : roots) names += (names.empty() ? "" : ", ") + h.names_[r];
    throw ForestError("expected a single root, found " + std::to_string(roots.size()) + ": " +
                      names);
  }
  h.root_ = NodeId{roots.front()};

  // Pre-order from the root gives depths; its reverse gives heights.
  std::vector<std::size_t> order;
  order.reserve(n);
  h.depths_.assign(n, 0);
  std::vector<std::size_t> stack{h.root_.index};
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (NodeId c : h.children_[v]) {
      h.depths_[c.index] = h.depths_[v] + 1;
      stack.push_back(c.index);
    }
  }
  h.heights_.assign(n, 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (auto p = h.parents_[*it]) {
      h.heights_[p->index] = std::max(h.heights_[p->index], h.heights_[*it] + 1);
    }
  }

  if (class_list) {
    h.class_names_ = std::move(*class_list);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (h.children_[i].empty()) h.class_names_.push_back(h.names_[i]);
    }
    std::sort(h.class_names_.begin(), h.class_names_.end());
  }
  for (std::size_t label = 0; label < h.class_names_.size(); ++label) {
    const std::string& cname = h.class_names_[label];
    auto node = h.find(cname);
    if (!node) throw LookupError("class '" + cname + "' does not occur in the hierarchy");
    if (!h.is_leaf(*node)) throw HierarchyError("class '" + cname + "' is not a leaf");
    if (!h.labels_.emplace(cname, label).second) {
      throw HierarchyError("class '" + cname + "' listed twice");
    }
    h.classes_.push_back(*node);
  }
  return h;
}

std::optional<NodeId> ClassHierarchy::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return NodeId{it->second};
}

std::optional<NodeId> ClassHierarchy::parent(NodeId n) const { return parents_[n.index]; }

std::size_t ClassHierarchy::label_of(std::string_view class_name) const {
  auto it = labels_.find(std::string(class_name));
  if (it == labels_.end()) throw LookupError("unknown class '" + std::string(class_name) + "'");
  return it->second;
}

NodeId ClassHierarchy::lca(NodeId a, NodeId b) const {
  while (depths_[a.index] > depths_[b.index]) a = *parents_[a.index];
  while (depths_[b.index] > depths_[a.index]) b = *parents_[b.index];
  while (a != b) {
    a = *parents_[a.index];
    b = *parents_[b.index];
  }
  return a;
}

NodeId ClassHierarchy::lca(std::string_view class_a, std::string_view class_b) const {
  return lca(classes_[label_of(class_a)], classes_[label_of(class_b)]);
}

std::string ClassHierarchy::to_edge_list() const {
  std::string out;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    const auto& kids = children_[v.index];
    for (NodeId c : kids) out += names_[v.index] + "\t" + names_[c.index] + "\n";
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<std::string> parse_class_list(std::string_view text) {
  auto lines = lines_of(text);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  std::vector<std::string> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) {
      throw FormatError("class list line " + std::to_string(i + 1) + " is empty");
    }
    out.emplace_back(lines[i]);
  }
  if (out.empty()) throw FormatError("class list is empty");
  return out;
}

std::vector<std::string> load_class_list(const std::filesystem::path& path) {
  try {
    return parse_class_list(read_text_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ClassHierarchy load_hierarchy(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& class_list) {
  std::optional<std::vector<std::string>> classes;
  if (class_list) classes = load_class_list(*class_list);
  const std::string text = read_text_file(path);
  try {
    return ClassHierarchy::parse(text, std::move(classes));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

ClassHierarchy make_balanced_hierarchy(std::span<const std::size_t> branching) {
  if (branching.empty()) throw ValidationError("balanced hierarchy needs at least one level");
  std::ostringstream edges;
  std::size_t leaf_count = 1;
  for (std::size_t b : branching) {
    if (b == 0) throw ValidationError("branching factor must be positive");
    leaf_count *= b;
  }
  const std::size_t width = std::max<std::size_t>(3, std::to_string(leaf_count - 1).size());
  std::size_t next_leaf = 0;
  std::size_t next_inner = 0;
  // Depth-first so that leaf numbering follows sibling groups.
  struct Frame {
    std::string name;
    std::size_t level;
  };
  std::vector<Frame> stack{{"root", 0}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    std::vector<Frame> kids;
    for (std::size_t i = 0; i < branching[f.level]; ++i) {
      std::string child;
      if (f.level + 1 == branching.size()) {
        std::string num = std::to_string(next_leaf++);
        child = "c" + std::string(width - std::min(num.size(), width), '0') + num;
      } else {
        child = "g" + std::to_string(f.level + 1) + "_" + std::to_string(next_inner++);
      }
      edges << f.name << '\t' << child << '\n';
      kids.push_back({child, f.level + 1});
    }
    if (f.level + 1 < branching.size()) {
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
  }
  return ClassHierarchy::parse(edges.str());
}

SimilarityMatrix::SimilarityMatrix(Tensor values, std::vector<std::string> class_names)
    : values_(std::move(values)), names_(std::move(class_names)) {
  if (values_.rank() != 2 || values_.rows() != values_.cols() || values_.rows() != names_.size()) {
    throw DimensionError("similarity matrix of shape " + shape_to_string(values_.shape()) +
                         " for " + std::to_string(names_.size()) + " classes");
  }
}

SimilarityMatrix semantic_similarity(const ClassHierarchy& h) {
  const std::size_t height = h.tree_height();
  const std::size_t n = h.num_classes();
  if (height == 0 || n < 2) {
    throw HierarchyError("degenerate hierarchy: " + std::to_string(n) + " class(es), tree height " +
                         std::to_string(height));
  }
  Tensor s(Shape{n, n});
  const double hh = static_cast<double>(height);
  for (std::size_t i = 0; i < n; ++i) {
    s.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const NodeId l = h.lca(h.class_node(i), h.class_node(j));
      const double v = 1.0 - static_cast<double>(h.height(l)) / hh;
      s.at(i, j) = v;
      s.at(j, i) = v;
    }
  }
  return SimilarityMatrix(std::move(s), h.class_names());
}

void write_similarity_csv(std::ostream& out, const SimilarityMatrix& s) {
  out << "class";
  for (const auto& name : s.class_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    out << s.class_names()[i];
    for (std::size_t j = 0; j < s.size(); ++j) out << ',' << format_double(s(i, j));
    out << '\n';
  }
}

}  // namespace coslearn
