#include "cmg/feature_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cmg/errors.hpp"

namespace cmg {
namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'M', 'G', 'F'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = dims.empty() ? 0 : 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_feature_bytes(const Tensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > 4)
    throw ValidationError("CMGF tensors must have rank 1..4, got " + std::to_string(tensor.dims.size()));
  if (tensor.element_count() != tensor.data.size())
    throw ValidationError("tensor payload does not match its dims");
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(tensor.dims.size()));
  for (auto d : tensor.dims) put_u32(out, d);
  out.reserve(out.size() + 4 * tensor.data.size());
  for (float f : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_feature_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw FormatError("truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic", 0);
  if (bytes.size() < 6) throw FormatError("truncated header", bytes.size());
  if (bytes[4] != kVersion) throw FormatError("unsupported version " + std::to_string(bytes[4]), 4);
  const std::size_t rank = bytes[5];
  if (rank < 1 || rank > 4) throw FormatError("rank must be 1..4, got " + std::to_string(rank), 5);
  const std::size_t header = 6 + 4 * rank;
  if (bytes.size() < header) throw FormatError("truncated dims", bytes.size());

  Tensor t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    t.dims.push_back(get_u32(bytes, 6 + 4 * i));
    count *= t.dims.back();
  }
  const std::uint64_t payload = bytes.size() - header;
  if (payload != count * 4) {
    throw FormatError("payload holds " + std::to_string(payload) + " bytes but dims require " +
                          std::to_string(count * 4),
                      payload < count * 4 ? bytes.size() : header + count * 4);
  }
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) t.data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  return t;
}

void write_feature_file(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_feature_bytes(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_feature_bytes(bytes);
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
  if (t.dims.empty()) return {};
  const Eigen::Index cols = t.dims.back();
  const Eigen::Index rows = cols == 0 ? 0 : static_cast<Eigen::Index>(t.element_count()) / cols;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = t.data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

}  // namespace cmg
