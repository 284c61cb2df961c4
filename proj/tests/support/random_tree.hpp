// SPDX-License-Identifier: Apache-2.0
// Random taxonomies for tests: edge-list text with internal nodes `n<i>` and
// leaves `leaf<i>`.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "coslearn/random.hpp"

namespace coslearn::testing {

struct RandomTreeOptions {
  std::size_t leaves = 16;
  std::size_t max_children = 4;
  /// Probability that an internal node gets a single internal child, which
  /// makes branches end at different depths.
  double chain_probability = 0.15;
};

namespace detail {

inline std::string leaf_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "leaf%03zu", i);
  return buf;
}

inline void grow(Rng& rng, const RandomTreeOptions& opt, const std::string& node, std::size_t count,
                 std::size_t& next_leaf, std::size_t& next_node, std::string& out) {
  auto child_internal = [&] { return "n" + std::to_string(next_node++); };
  if (count >= 2 && rng.uniform() < opt.chain_probability) {
    const std::string c = child_internal();
    out += node + "\t" + c + "\n";
    grow(rng, opt, c, count, next_leaf, next_node, out);
    return;
  }
  const std::size_t k = std::min(count, 2 + rng.index(opt.max_children - 1));
  // Random composition of count into k positive parts.
  std::vector<std::size_t> cuts;
  std::vector<std::size_t> pool(count - 1);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i + 1;
  rng.shuffle(std::span<std::size_t>(pool));
  cuts.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k - 1));
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(count);
  std::size_t prev = 0;
  for (std::size_t cut : cuts) {
    const std::size_t part = cut - prev;
    prev = cut;
    if (part == 1) {
      out += node + "\t" + leaf_name(next_leaf++) + "\n";
    } else {
      const std::string c = child_internal();
      out += node + "\t" + c + "\n";
      grow(rng, opt, c, part, next_leaf, next_node, out);
    }
  }
}

}  // namespace detail

/// Edge list of a random rooted tree with exactly opt.leaves leaves (>= 2).
inline std::string random_tree_edges(Rng& rng, const RandomTreeOptions& opt) {
  std::string out;
  std::size_t next_leaf = 0;
  std::size_t next_node = 1;
  detail::grow(rng, opt, "n0", opt.leaves, next_leaf, next_node, out);
  return out;
}

/// Deep, unbalanced taxonomy in the style of a bird species tree: 200 leaves
/// with branches of uneven depth.
inline std::string cub_style_edges(std::uint64_t seed = 2019) {
  Rng rng(seed);
  return random_tree_edges(rng, {.leaves = 200, .max_children = 8, .chain_probability = 0.3});
}

}  // namespace coslearn::testing
