#include <algorithm>
#include <numeric>
#include <random>

#include "cmg/metagraph.hpp"
#include "cmg/nn.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace cmg;

TEST_CASE("kNN on 1-D points [0],[1],[3],[7] with J=1") {
  Matrix x(4, 1);
  x << 0, 1, 3, 7;
  const auto g = build_knn_edges(x, 1);
  const std::vector<std::pair<int, int>> want{{0, 1}, {1, 0}, {2, 1}, {3, 2}};
  CHECK(g.edges == want);
  CHECK(g.adjacency.sum() == 4.0);
}

TEST_CASE("kNN edge cases") {
  const auto single = build_knn_edges(Matrix::Ones(1, 2), 3);
  CHECK(single.edges.empty());
  CHECK(single.adjacency == Matrix::Zero(1, 1));
  std::mt19937_64 rng(3);
  const auto full = build_knn_edges(testing::random_matrix(4, 2, rng), 5);
  CHECK(full.adjacency == (Matrix::Ones(4, 4) - Matrix::Identity(4, 4)));
  // equal distances break ties to the smaller index
  Matrix x(3, 1);
  x << 0, -1, 1;
  CHECK(build_knn_edges(x, 1).edges.front() == std::pair<int, int>{0, 1});
}

TEST_CASE("kNN agrees with a full-sort oracle") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(1, 32), jd(1, 5), dim(1, 4);
  for (int inst = 0; inst < 1000; ++inst) {
    const Matrix x = testing::random_matrix(len(rng), dim(rng), rng);
    const int j = jd(rng);
    const auto g = build_knn_edges(x, j);
    CHECK(g.edges == oracle::knn_edges(x, j));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      CHECK(g.adjacency(i, i) == 0.0);
      CHECK(g.adjacency.row(i).sum() == std::min<Eigen::Index>(j, x.rows() - 1));
    }
    CHECK(((g.adjacency.array() == 0.0) || (g.adjacency.array() == 1.0)).all());
  }
}

TEST_CASE("meta graph encoding by hand") {
  ad::Tape t;
  Matrix x(2, 1);
  x << 1, 2;
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  auto r = encode_meta_graph(t, t.constant(x), a, t.constant(Matrix::Identity(2, 2)));
  CHECK(r.value() == (Matrix(1, 2) << 2, 2).finished());

  Matrix w(4, 3);
  w.setRandom();
  Matrix one(1, 2);
  one << 0.5, -1.5;
  auto single = encode_meta_graph(t, t.constant(one), Matrix::Zero(1, 1), t.constant(w));
  Matrix cat(1, 4);
  cat << 0.5, -1.5, 0, 0;
  CHECK((single.value() - cat * w).norm() < 1e-14);

  CHECK(encode_meta_graph(t, t.constant(x), a, t.constant(Matrix::Zero(2, 5))).value().isZero());
  CHECK(empty_meta_graph(t, 7).value() == Matrix::Zero(1, 7));
  CHECK(encode_meta_graph(t, t.constant(Matrix(0, 2)), Matrix(0, 0), t.constant(w)).value() == Matrix::Zero(1, 3));
}

TEST_CASE("row normalization") {
  Matrix a(3, 3);
  a << 0, 1, 1, 0, 0, 0, 1, 0, 0;
  const Matrix n = row_normalize(a);
  CHECK(n(0, 1) == 0.5);
  CHECK(n.row(1).isZero());
  CHECK(n(2, 0) == 1.0);
}

TEST_CASE("R_meta is invariant to node order") {
  std::mt19937_64 rng(21);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 2 + inst % 9;
    const Matrix x = testing::random_matrix(n, 3, rng);
    const Matrix w = testing::random_matrix(6, 4, rng);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix px(n, 3);
    for (int i = 0; i < n; ++i) px.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    ad::Tape t;
    const Matrix r0 = encode_meta_graph(t, t.constant(x), build_knn_edges(x, 3).adjacency, t.constant(w)).value();
    const Matrix r1 = encode_meta_graph(t, t.constant(px), build_knn_edges(px, 3).adjacency, t.constant(w)).value();
    CHECK((r0 - r1).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("meta graph gradient matches finite differences") {
  std::mt19937_64 rng(8);
  for (int inst = 0; inst < 10; ++inst) {
    ParameterSet ps;
    const auto ix = ps.add("x", testing::random_matrix(5, 3, rng));
    const auto iw = ps.add("w", testing::random_matrix(6, 4, rng));
    // fixed graph so the finite-difference probe never flips a neighbour choice
    const Matrix adj = build_knn_edges(ps[ix].value, 2).adjacency;
    auto res = testing::check_gradients(ps, [&](ad::Tape& t) {
      return testing::probe_sum(t, encode_meta_graph(t, t.param(ps[ix]), adj, t.param(ps[iw])), 3);
    });
    CHECK(res.max_relative_error < 1e-4);
  }
}
