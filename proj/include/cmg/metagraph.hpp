#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "cmg/autodiff.hpp"

namespace cmg {

/// Directed kNN graph over concept nodes.
struct KnnGraph {
  /// (node, neighbour) pairs, grouped by node, neighbours nearest first.
  std::vector<std::pair<int, int>> edges;
  /// L x L, adjacency(i, k) = 1 iff k is one of i's neighbours.
  Matrix adjacency;
  int j = 0;
};

/// Each node links to its min(j, L-1) nearest other nodes by Euclidean distance
/// between rows, ties to the smaller index.
template <typename Derived>
KnnGraph build_knn_edges(const Eigen::MatrixBase<Derived>& nodes, int j) {
  const auto n = static_cast<int>(nodes.rows());
  KnnGraph g;
  g.j = j;
  g.adjacency = Matrix::Zero(n, n);
  if (n == 0) return g;
  const int take = std::max(0, std::min(j, n - 1));
  std::vector<double> d(static_cast<std::size_t>(n));
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) d[static_cast<std::size_t>(k)] = (nodes.row(i) - nodes.row(k)).squaredNorm();
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    idx.erase(idx.begin() + i);
    std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](int a, int b) {
      const double da = d[static_cast<std::size_t>(a)], db = d[static_cast<std::size_t>(b)];
      return da < db || (da == db && a < b);
    });
    for (int q = 0; q < take; ++q) {
      g.edges.emplace_back(i, idx[static_cast<std::size_t>(q)]);
      g.adjacency(i, idx[static_cast<std::size_t>(q)]) = 1.0;
    }
  }
  return g;
}

/// Row-normalized copy (each non-empty row sums to 1).
Matrix row_normalize(const Matrix& adjacency);

/// Per-node [X, A X] W_a followed by a column-wise max over nodes (1 x d_out).
/// X is L x d; with L = 0 the result is a zero row of W_a's width.
ad::Var encode_meta_graph(ad::Tape& tape, const ad::Var& nodes, const Matrix& adjacency, const ad::Var& w_a);
/// Same with an empty node set.
ad::Var empty_meta_graph(ad::Tape& tape, Eigen::Index out_dim);

}  // namespace cmg
