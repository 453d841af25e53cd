#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "tomo/errors.hpp"
#include "tomo/io.hpp"
#include "tomo/linalg.hpp"

namespace tomo {

/// Binary J x I incidence matrix mapping latent components (links, OD pairs)
/// to measurements (paths, link counts).
///
/// Construction enforces: entries in {0, 1}, no all-zero row, no all-zero
/// column. Use `validate_routing` to inspect an arbitrary matrix without
/// throwing.
class RoutingMatrix {
 public:
  RoutingMatrix() = default;

  explicit RoutingMatrix(Matrix entries, std::vector<std::string> component_labels = {},
                         std::vector<std::string> measurement_labels = {})
      : entries_(std::move(entries)),
        component_labels_(std::move(component_labels)),
        measurement_labels_(std::move(measurement_labels)) {
    check();
  }

  Eigen::Index rows() const { return entries_.rows(); }
  Eigen::Index cols() const { return entries_.cols(); }
  /// Number of measurements (J).
  Eigen::Index measurements() const { return entries_.rows(); }
  /// Number of latent components (I).
  Eigen::Index components() const { return entries_.cols(); }

  const Matrix& matrix() const { return entries_; }
  auto column(Eigen::Index i) const { return entries_.col(i); }
  double operator()(Eigen::Index r, Eigen::Index c) const { return entries_(r, c); }

  const std::vector<std::string>& component_labels() const { return component_labels_; }
  const std::vector<std::string>& measurement_labels() const { return measurement_labels_; }

 private:
  void check() const {
    if (entries_.size() == 0) throw MalformedTopology("routing matrix is empty");
    for (Eigen::Index r = 0; r < rows(); ++r)
      for (Eigen::Index c = 0; c < cols(); ++c)
        if (entries_(r, c) != 0.0 && entries_(r, c) != 1.0)
          throw MalformedTopology("routing matrix entry (" + std::to_string(r) + "," +
                                  std::to_string(c) + ") is not 0 or 1");
    for (Eigen::Index r = 0; r < rows(); ++r)
      if (entries_.row(r).sum() == 0.0)
        throw MalformedTopology("routing matrix row " + std::to_string(r) + " is all zero");
    for (Eigen::Index c = 0; c < cols(); ++c)
      if (entries_.col(c).sum() == 0.0)
        throw MalformedTopology("routing matrix column " + std::to_string(c) + " is all zero");
    if (!component_labels_.empty() &&
        component_labels_.size() != static_cast<std::size_t>(cols()))
      throw PreconditionError("component label count does not match column count");
    if (!measurement_labels_.empty() &&
        measurement_labels_.size() != static_cast<std::size_t>(rows()))
      throw PreconditionError("measurement label count does not match row count");
  }

  Matrix entries_;
  std::vector<std::string> component_labels_;
  std::vector<std::string> measurement_labels_;
};

/// Rooted tree given as a parent-index list (root has parent -1). Children of
/// a node are ordered by increasing node index, which is the left-to-right
/// order used for edge and leaf numbering.
struct Tree {
  std::vector<int> parent;
  std::vector<std::string> names;  // optional, one per node
};

/// Tree with one shared link feeding two leaf links.
inline Tree two_leaf_tree() { return Tree{{-1, 0, 1, 1}, {"root", "b", "l1", "l2"}}; }

/// Binary tree with one root link, two internal nodes and four leaves (7 links).
inline Tree four_leaf_tree() {
  return Tree{{-1, 0, 1, 1, 2, 2, 3, 3}, {"root", "b", "c1", "c2", "l1", "l2", "l3", "l4"}};
}

namespace detail {

struct TreeLayout {
  int root = -1;
  std::vector<std::vector<int>> children;
  std::vector<int> bfs_order;  // all nodes, root first
};

inline TreeLayout layout_tree(const std::vector<int>& parent) {
  const int n = static_cast<int>(parent.size());
  if (n < 2) throw MalformedTopology("tree needs at least two nodes");
  TreeLayout t;
  t.children.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    const int p = parent[static_cast<std::size_t>(v)];
    if (p == -1) {
      if (t.root != -1) throw MalformedTopology("tree has more than one root (disconnected)");
      t.root = v;
    } else if (p < 0 || p >= n) {
      throw MalformedTopology("node " + std::to_string(v) + " has out-of-range parent " +
                              std::to_string(p));
    } else if (p == v) {
      throw MalformedTopology("node " + std::to_string(v) + " is its own parent");
    } else {
      t.children[static_cast<std::size_t>(p)].push_back(v);
    }
  }
  if (t.root == -1) throw MalformedTopology("tree has no root (cyclic)");

  std::deque<int> queue{t.root};
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  seen[static_cast<std::size_t>(t.root)] = true;
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    t.bfs_order.push_back(v);
    for (int c : t.children[static_cast<std::size_t>(v)]) {
      if (seen[static_cast<std::size_t>(c)]) throw MalformedTopology("tree contains a cycle");
      seen[static_cast<std::size_t>(c)] = true;
      queue.push_back(c);
    }
  }
  if (static_cast<int>(t.bfs_order.size()) != n) {
    throw MalformedTopology("tree is disconnected or cyclic: " +
                            std::to_string(n - static_cast<int>(t.bfs_order.size())) +
                            " node(s) unreachable from the root");
  }
  return t;
}

}  // namespace detail

/// Routing matrix of a tree: one column per edge (breadth-first,
/// left-to-right), one row per leaf with ones on its root-to-leaf path.
///
/// `leaf_order` lists node indices of leaves in the desired row order; when
/// empty, leaves are taken in breadth-first order.
inline RoutingMatrix build_tree_routing(const Tree& tree, const std::vector<int>& leaf_order = {}) {
  const auto layout = detail::layout_tree(tree.parent);
  const std::size_t n = tree.parent.size();
  if (!tree.names.empty() && tree.names.size() != n)
    throw PreconditionError("tree names must have one entry per node");

  std::vector<int> edge_of(n, -1);
  int edges = 0;
  std::vector<int> bfs_leaves;
  for (int v : layout.bfs_order) {
    if (v == layout.root) continue;
    edge_of[static_cast<std::size_t>(v)] = edges++;
    if (layout.children[static_cast<std::size_t>(v)].empty()) bfs_leaves.push_back(v);
  }

  std::vector<int> leaves = bfs_leaves;
  if (!leaf_order.empty()) {
    std::vector<int> a = leaf_order, b = bfs_leaves;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) throw MalformedTopology("leaf order is not a permutation of the tree's leaves");
    leaves = leaf_order;
  }
  if (leaves.size() < 2) throw MalformedTopology("tree needs at least two leaves for tomography");

  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(leaves.size()), edges);
  for (std::size_t j = 0; j < leaves.size(); ++j) {
    for (int v = leaves[j]; v != layout.root; v = tree.parent[static_cast<std::size_t>(v)]) {
      a(static_cast<Eigen::Index>(j), edge_of[static_cast<std::size_t>(v)]) = 1.0;
    }
  }

  std::vector<std::string> comp(static_cast<std::size_t>(edges));
  std::vector<std::string> meas;
  auto name = [&](int v) {
    return tree.names.empty() ? "n" + std::to_string(v) : tree.names[static_cast<std::size_t>(v)];
  };
  for (std::size_t v = 0; v < n; ++v) {
    if (edge_of[v] >= 0) {
      comp[static_cast<std::size_t>(edge_of[v])] =
          name(tree.parent[v]) + "->" + name(static_cast<int>(v));
    }
  }
  for (int leaf : leaves) meas.push_back(name(leaf));
  return RoutingMatrix(std::move(a), std::move(comp), std::move(meas));
}

/// Parses a plain-text adjacency list: one `child parent` pair per line, the
/// root's parent written as `-`. '#' starts a comment. Node order (and hence
/// left-to-right order) is the order in which nodes appear as children.
inline Tree parse_adjacency(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string child, parent, extra;
    if (!(ls >> child)) continue;
    if (!(ls >> parent) || (ls >> extra)) {
      throw ParseError("adjacency line " + std::to_string(lineno) +
                       ": expected exactly `child parent`");
    }
    pairs.emplace_back(child, parent);
  }
  Tree tree;
  std::map<std::string, int> index;
  for (const auto& [child, parent] : pairs) {
    if (index.count(child)) throw MalformedTopology("node '" + child + "' has two parents");
    index[child] = static_cast<int>(tree.names.size());
    tree.names.push_back(child);
  }
  tree.parent.resize(tree.names.size(), -1);
  for (const auto& [child, parent] : pairs) {
    if (parent == "-") continue;
    auto it = index.find(parent);
    if (it == index.end())
      throw MalformedTopology("parent '" + parent + "' of '" + child + "' is never declared");
    tree.parent[static_cast<std::size_t>(index[child])] = it->second;
  }
  return tree;
}

inline Tree read_adjacency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_adjacency(in);
}

/// Incidence of a single router with `n_in` input and `n_out` output links.
/// Column o*n_out + d is the OD pair (input o, output d). Rows are input-link
/// counts followed by output-link counts; `drop_last_row` removes the final
/// output row, which is the linear combination (total in) - (other outputs).
inline RoutingMatrix build_router_routing(int n_in, int n_out, bool drop_last_row) {
  if (n_in < 1 || n_out < 1) throw PreconditionError("router needs n_in >= 1 and n_out >= 1");
  const int rows = n_in + n_out - (drop_last_row ? 1 : 0);
  if (rows < 1) throw PreconditionError("router with drop_last_row has no rows left");
  Matrix a = Matrix::Zero(rows, n_in * n_out);
  std::vector<std::string> comp, meas;
  for (int o = 0; o < n_in; ++o) {
    for (int d = 0; d < n_out; ++d) {
      const int col = o * n_out + d;
      a(o, col) = 1.0;
      if (n_in + d < rows) a(n_in + d, col) = 1.0;
      comp.push_back("in" + std::to_string(o) + "-out" + std::to_string(d));
    }
  }
  for (int o = 0; o < n_in; ++o) meas.push_back("in" + std::to_string(o));
  for (int d = 0; n_in + d < rows; ++d) meas.push_back("out" + std::to_string(d));
  return RoutingMatrix(std::move(a), std::move(comp), std::move(meas));
}

struct RoutingDiagnostics {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> non_binary;  // (row, col)
  std::vector<Eigen::Index> zero_rows;
  std::vector<Eigen::Index> zero_columns;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> duplicate_columns;  // warning only
  Eigen::Index rank = 0;

  bool valid() const { return non_binary.empty() && zero_rows.empty() && zero_columns.empty(); }
};

inline RoutingDiagnostics validate_routing(const Matrix& a) {
  RoutingDiagnostics d;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if (a(r, c) != 0.0 && a(r, c) != 1.0) d.non_binary.emplace_back(r, c);
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    if (a.row(r).cwiseAbs().sum() == 0.0) d.zero_rows.push_back(r);
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    if (a.col(c).cwiseAbs().sum() == 0.0) d.zero_columns.push_back(c);
  for (Eigen::Index c1 = 0; c1 < a.cols(); ++c1)
    for (Eigen::Index c2 = c1 + 1; c2 < a.cols(); ++c2)
      if (a.col(c1) == a.col(c2)) d.duplicate_columns.emplace_back(c1, c2);
  d.rank = linalg::numerical_rank(a, 1e-10);
  return d;
}

inline RoutingDiagnostics validate_routing(const RoutingMatrix& a) {
  return validate_routing(a.matrix());
}

inline void write_routing_csv(std::ostream& out, const RoutingMatrix& a) {
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) out << (c ? "," : "") << (a(r, c) != 0.0 ? 1 : 0);
    out << '\n';
  }
}

inline RoutingMatrix read_routing_csv(std::istream& in) {
  return RoutingMatrix(io::read_matrix_csv(in, "routing matrix"));
}

inline RoutingMatrix read_routing_csv_file(const std::string& path) {
  return RoutingMatrix(io::read_matrix_csv_file(path));
}

}  // namespace tomo
