#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cmg {

/// Dense float32 tensor of rank 1..4 as stored in a CMGF container.
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const;
  bool operator==(const Tensor&) const = default;
};

/// CMGF layout: "CMGF", version byte (1), rank byte, rank little-endian u32 dims,
/// then row-major little-endian float32 payload.
void write_feature_file(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_feature_file(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_feature_bytes(const Tensor& tensor);
Tensor decode_feature_bytes(std::span<const std::uint8_t> bytes);

/// Rank-2 tensor from a matrix (rows x cols), narrowed to float32.
template <typename Derived>
Tensor to_tensor(const Eigen::MatrixBase<Derived>& m) {
  Tensor t;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(static_cast<float>(m(r, c)));
  return t;
}

/// Interprets the tensor as (product of leading dims) x (last dim).
Eigen::MatrixXd to_matrix(const Tensor& t);

}  // namespace cmg
