// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "coslearn/error.hpp"
#include "coslearn/hierarchy.hpp"
#include "coslearn/random.hpp"
#include "random_tree.hpp"

namespace coslearn {
namespace {

constexpr const char* kFiveNode = "r\tA\nr\tB\nA\ta1\nA\ta2\nB\tb1\n";

// Parent map straight from the edge text, independent of ClassHierarchy.
std::map<std::string, std::string> parents_of(const std::string& edges) {
  std::map<std::string, std::string> parent;
  std::istringstream in(edges);
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    parent[line.substr(tab + 1)] = line.substr(0, tab);
  }
  return parent;
}

std::vector<std::string> ancestors(const std::map<std::string, std::string>& parent, std::string n) {
  std::vector<std::string> chain{n};
  for (auto it = parent.find(n); it != parent.end(); it = parent.find(n)) {
    n = it->second;
    chain.push_back(n);
  }
  return chain;
}

TEST(Hierarchy, StarExample) {
  const auto h = ClassHierarchy::parse("root\ta\nroot\tb");
  EXPECT_EQ(h.num_classes(), 2u);
  EXPECT_EQ(h.class_names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(h.tree_height(), 1u);
}

TEST(Hierarchy, FiveNodeExample) {
  const auto h = ClassHierarchy::parse(kFiveNode);
  EXPECT_EQ(h.class_names(), (std::vector<std::string>{"a1", "a2", "b1"}));
  EXPECT_EQ(h.tree_height(), 2u);
  EXPECT_EQ(h.name(h.lca("a1", "a2")), "A");
  EXPECT_EQ(h.name(h.lca("a1", "b1")), "r");
  EXPECT_EQ(h.name(h.lca("a1", "a1")), "a1");
  EXPECT_THROW((void)h.lca("a1", "zz"), LookupError);
  EXPECT_THROW((void)h.lca("a1", "A"), LookupError);
}

TEST(Hierarchy, ParseErrors) {
  EXPECT_THROW(ClassHierarchy::parse("x\ty\ny\tx"), CycleError);
  EXPECT_THROW(ClassHierarchy::parse("r\ta\ns\tb"), ForestError);
  EXPECT_THROW(ClassHierarchy::parse("r\ta\nr\ta\nr\tb"), DuplicateEdgeError);
  EXPECT_THROW(ClassHierarchy::parse("r\ta\ns\ta\nr\ts"), HierarchyError);
  EXPECT_THROW(ClassHierarchy::parse("r a\n"), FormatError);
  EXPECT_THROW(ClassHierarchy::parse("r\t \n"), FormatError);
  EXPECT_THROW(ClassHierarchy::parse("# only a comment\n\n"), FormatError);
}

TEST(Hierarchy, CycleMessageNamesWitness) {
  try {
    ClassHierarchy::parse("r\ts\nx\ta\na\tb\nb\tx\n");
    FAIL();
  } catch (const CycleError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('a'), std::string::npos);
    EXPECT_NE(msg.find("->"), std::string::npos);
  }
}

TEST(Hierarchy, CommentsAndClassList) {
  const auto h = ClassHierarchy::parse("# taxonomy\n\nr\tA\nr\tB\nA\ta1\nA\ta2\nB\tb1\n",
                                       std::vector<std::string>{"b1", "a2", "a1"});
  EXPECT_EQ(h.label_of("b1"), 0u);
  EXPECT_EQ(h.label_of("a1"), 2u);
  EXPECT_EQ(h.name(h.class_node(1)), "a2");
  EXPECT_THROW(ClassHierarchy::parse(kFiveNode, std::vector<std::string>{"a1", "A"}), HierarchyError);
  EXPECT_THROW(ClassHierarchy::parse(kFiveNode, std::vector<std::string>{"a1", "q"}), LookupError);
}

TEST(Hierarchy, EdgeListRoundTrip) {
  Rng rng(3);
  const auto h = ClassHierarchy::parse(testing::random_tree_edges(rng, {.leaves = 30}));
  const auto again = ClassHierarchy::parse(h.to_edge_list());
  EXPECT_EQ(again.class_names(), h.class_names());
  EXPECT_EQ(again.num_nodes(), h.num_nodes());
  EXPECT_EQ(again.tree_height(), h.tree_height());
}

TEST(Similarity, Examples) {
  const auto s = semantic_similarity(ClassHierarchy::parse(kFiveNode));
  EXPECT_EQ(s(0, 1), 0.5);
  EXPECT_EQ(s(0, 2), 0.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s(i, i), 1.0);
}

TEST(Similarity, StarIsIdentity) {
  std::string edges;
  for (int i = 0; i < 7; ++i) edges += "root\tc" + std::to_string(i) + "\n";
  const auto s = semantic_similarity(ClassHierarchy::parse(edges));
  EXPECT_EQ(s.values(), Tensor::identity(7));
}

TEST(Similarity, DegenerateHierarchy) {
  // An edge list always gives H >= 1, so a single class is the degenerate case.
  EXPECT_THROW(semantic_similarity(ClassHierarchy::parse("r\ta\n")), HierarchyError);
}

TEST(Similarity, RandomTreesMatchBruteForceLca) {
  Rng rng(41);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t leaves = 2 + rng.index(63);
    const std::string edges = testing::random_tree_edges(rng, {.leaves = leaves});
    const auto h = ClassHierarchy::parse(edges);
    const auto parent = parents_of(edges);
    ASSERT_EQ(h.num_classes(), leaves);

    // Oracle heights by brute force: longest distance from each node down to
    // any leaf, via every leaf's ancestor chain.
    std::map<std::string, std::size_t> height;
    for (const auto& c : h.class_names()) {
      const auto chain = ancestors(parent, c);
      for (std::size_t i = 0; i < chain.size(); ++i) height[chain[i]] = std::max(height[chain[i]], i);
    }
    const double H = static_cast<double>(height[h.name(h.root())]);
    EXPECT_EQ(h.tree_height(), height[h.name(h.root())]);

    const auto s = semantic_similarity(h);
    for (std::size_t i = 0; i < leaves; ++i) {
      const auto ai = ancestors(parent, h.class_names()[i]);
      for (std::size_t j = 0; j < leaves; ++j) {
        const auto aj = ancestors(parent, h.class_names()[j]);
        std::string lca;
        for (const auto& x : ai) {
          if (std::find(aj.begin(), aj.end(), x) != aj.end()) {
            lca = x;
            break;
          }
        }
        ASSERT_EQ(h.name(h.lca(h.class_names()[i], h.class_names()[j])), lca);
        EXPECT_EQ(s(i, j), 1.0 - static_cast<double>(height[lca]) / H);
        EXPECT_EQ(s(i, j), s(j, i));
        EXPECT_GE(s(i, j), 0.0);
        EXPECT_LE(s(i, j), 1.0);
      }
    }
  }
}

TEST(Similarity, DeeperLcaMeansLargerSimilarity) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = ClassHierarchy::parse(testing::random_tree_edges(rng, {.leaves = 24}));
    const auto s = semantic_similarity(h);
    const std::size_t n = h.num_classes();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < n; ++k) {
          const NodeId l1 = h.lca(h.class_node(i), h.class_node(j));
          const NodeId l2 = h.lca(h.class_node(i), h.class_node(k));
          // l2 a strict ancestor of l1 means l1 is deeper on the same path.
          bool strict_ancestor = false;
          for (auto p = h.parent(l1); p; p = h.parent(*p)) strict_ancestor |= (*p == l2);
          if (strict_ancestor && h.height(l1) < h.height(l2)) EXPECT_GT(s(i, j), s(i, k));
        }
      }
    }
  }
}

TEST(Hierarchy, BalancedFactory) {
  const std::size_t branching[] = {4, 4};
  const auto h = make_balanced_hierarchy(branching);
  EXPECT_EQ(h.num_classes(), 16u);
  EXPECT_EQ(h.tree_height(), 2u);
  EXPECT_EQ(h.class_names().front(), "c000");
  const auto s = semantic_similarity(h);
  EXPECT_EQ(s(0, 3), 0.5);
  EXPECT_EQ(s(0, 4), 0.0);
}

TEST(Hierarchy, ClassListParsing) {
  EXPECT_EQ(parse_class_list("a\nb\r\nc\n"), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_THROW(parse_class_list(""), FormatError);
}

TEST(Similarity, CsvHasNamedHeader) {
  std::ostringstream out;
  write_similarity_csv(out, semantic_similarity(ClassHierarchy::parse(kFiveNode)));
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "class,a1,a2,b1");
}

}  // namespace
}  // namespace coslearn
