// Copyright 2026 The vidspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "vidspec/common.hpp"
#include "vidspec/specdec.hpp"

namespace vidspec {

TreeTemplate::TreeTemplate(std::vector<Node> nodes) : nodes_(std::move(nodes)) {
  depth_.assign(nodes_.size(), 0);
  children_.assign(nodes_.size() + 1, {});
  std::vector<std::set<int>> ranks(nodes_.size() + 1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.parent < -1 || n.parent >= static_cast<int>(i)) {
      throw ConfigError("tree node " + std::to_string(i) + " must have an earlier parent");
    }
    if (n.rank < 0) throw ConfigError("tree node rank must be >= 0");
    if (!ranks[n.parent + 1].insert(n.rank).second) {
      throw ConfigError("sibling tree nodes must use distinct ranks");
    }
    depth_[i] = n.parent < 0 ? 1 : depth_[n.parent] + 1;
    max_depth_ = std::max(max_depth_, depth_[i]);
    children_[n.parent + 1].push_back(static_cast<int>(i));
  }
}

TreeTemplate TreeTemplate::chain(int depth) {
  if (depth < 1) throw ConfigError("chain depth must be >= 1");
  std::vector<Node> nodes;
  for (int i = 0; i < depth; ++i) nodes.push_back({i - 1, 0});
  return TreeTemplate(std::move(nodes));
}

TreeTemplate TreeTemplate::expand(const std::vector<int>& counts) {
  std::vector<Node> nodes;
  // (node index, accumulated rank) of the previous level; root first.
  std::vector<std::pair<int, int>> level = {{-1, 0}};
  for (int count : counts) {
    if (count < 1) throw ConfigError("tree level sizes must be >= 1");
    // (cost, parent order, rank)
    std::vector<std::tuple<int, int, int>> cand;
    for (int p = 0; p < static_cast<int>(level.size()); ++p) {
      for (int r = 0; r < count; ++r) cand.emplace_back(level[p].second + r, p, r);
    }
    std::sort(cand.begin(), cand.end());
    cand.resize(std::min<std::size_t>(cand.size(), static_cast<std::size_t>(count)));
    std::sort(cand.begin(), cand.end(),
              [](const auto& a, const auto& b) { return std::tie(std::get<1>(a), std::get<2>(a)) <
                                                        std::tie(std::get<1>(b), std::get<2>(b)); });
    std::vector<std::pair<int, int>> next;
    for (const auto& [cost, p, r] : cand) {
      next.emplace_back(static_cast<int>(nodes.size()), cost);
      nodes.push_back({level[p].first, r});
    }
    level = std::move(next);
  }
  return TreeTemplate(std::move(nodes));
}

TreeTemplate TreeTemplate::default_tree() { return expand({4, 8, 8, 4, 2}); }

int TreeTemplate::max_rank() const {
  int m = 0;
  for (const auto& n : nodes_) m = std::max(m, n.rank);
  return m;
}

const std::vector<int>& TreeTemplate::children(int node) const { return children_.at(node + 1); }

TreeTemplate TreeTemplate::parse(std::istream& in) {
  std::vector<Node> nodes;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    int id = 0;
    Node n;
    if (!(ls >> id)) continue;
    if (!(ls >> n.parent >> n.rank)) throw ConfigError("tree line needs 'id parent rank': " + line);
    if (id != static_cast<int>(nodes.size())) throw ConfigError("tree node ids must be 0, 1, 2, ... in order");
    nodes.push_back(n);
  }
  if (nodes.empty()) throw ConfigError("tree template has no nodes");
  return TreeTemplate(std::move(nodes));
}

TreeTemplate TreeTemplate::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open tree template " + path);
  return parse(in);
}

void TreeTemplate::write(std::ostream& out) const {
  out << "# id parent rank (parent -1 = root)\n";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    out << i << ' ' << nodes_[i].parent << ' ' << nodes_[i].rank << '\n';
  }
}

}  // namespace vidspec
