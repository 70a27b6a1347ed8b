#include "cmg/metagraph.hpp"

#include "cmg/errors.hpp"

namespace cmg {

Matrix row_normalize(const Matrix& adjacency) {
  Matrix out = adjacency;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double s = out.row(r).sum();
    if (s > 0.0) out.row(r) /= s;
  }
  return out;
}

ad::Var encode_meta_graph(ad::Tape& tape, const ad::Var& nodes, const Matrix& adjacency, const ad::Var& w_a) {
  if (nodes.rows() == 0) return empty_meta_graph(tape, w_a.cols());
  if (adjacency.rows() != nodes.rows() || adjacency.cols() != nodes.rows())
    throw ValidationError("adjacency must be L x L");
  if (w_a.rows() != 2 * nodes.cols()) throw ValidationError("W_a must have 2d rows");
  ad::Var agg = ad::matmul(tape.constant(adjacency), nodes);
  const ad::Var parts[2] = {nodes, agg};
  return ad::max_rows(ad::matmul(ad::hcat(parts), w_a));
}

ad::Var empty_meta_graph(ad::Tape& tape, Eigen::Index out_dim) { return tape.constant(Matrix::Zero(1, out_dim)); }

}  // namespace cmg
