#include <fstream>
#include <random>

#include "cmg/errors.hpp"
#include "cmg/feature_file.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace cmg;

TEST_CASE("zero grid roundtrips") {
  Tensor t{{2, 3}, std::vector<float>(6, 0.0f)};
  auto dir = testing::temp_dir("ff_zero");
  write_feature_file(dir / "z.cmgf", t);
  CHECK(read_feature_file(dir / "z.cmgf") == t);
}

TEST_CASE("random rank-3 tensor roundtrips bit-exactly") {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0.0f, 10.0f);
  Tensor t{{10, 8, 4}, {}};
  for (int i = 0; i < 320; ++i) t.data.push_back(n(rng));
  t.data[5] = -0.0f;
  t.data[6] = 1e-42f;  // subnormal
  auto dir = testing::temp_dir("ff_rand");
  write_feature_file(dir / "r.cmgf", t);
  const Tensor back = read_feature_file(dir / "r.cmgf");
  REQUIRE(back.dims == t.dims);
  CHECK(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)) == 0);
}

TEST_CASE("header layout is little-endian") {
  const auto bytes = encode_feature_bytes(Tensor{{2, 1}, {1.0f, -2.0f}});
  REQUIRE(bytes.size() == 4 + 1 + 1 + 8 + 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "CMGF");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 2);
  CHECK(bytes[6] == 2);
  CHECK(bytes[7] == 0);
  CHECK(bytes[10] == 1);
  // 1.0f = 0x3f800000
  CHECK(bytes[14] == 0x00);
  CHECK(bytes[17] == 0x3f);
}

namespace {
std::uint64_t offset_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_feature_bytes(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected a format error");
  return 0;
}
}  // namespace

TEST_CASE("malformed containers report byte offsets") {
  auto good = encode_feature_bytes(Tensor{{2, 2}, {1, 2, 3, 4}});
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = b[1] = b[2] = b[3] = 'X';
    CHECK(offset_of(b) == 0);
  }
  SUBCASE("bad version") {
    auto b = good;
    b[4] = 2;
    CHECK(offset_of(b) == 4);
  }
  SUBCASE("bad rank") {
    auto b = good;
    b[5] = 5;
    CHECK(offset_of(b) == 5);
    b[5] = 0;
    CHECK(offset_of(b) == 5);
  }
  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 3);
    CHECK(offset_of(b) > 5);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK_THROWS_AS(decode_feature_bytes(b), FormatError);
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + 8);
    CHECK_THROWS_AS(decode_feature_bytes(b), FormatError);
  }
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(read_feature_file("/nonexistent/dir/x.cmgf"), IoError);
}

TEST_CASE("rank above four is rejected on write") {
  CHECK_THROWS_AS(encode_feature_bytes(Tensor{{1, 1, 1, 1, 1}, {0.0f}}), ValidationError);
  CHECK_THROWS_AS(encode_feature_bytes(Tensor{{2, 2}, {0.0f}}), ValidationError);
}

TEST_CASE("to_matrix flattens leading dims") {
  Tensor t{{2, 2, 3}, {}};
  for (int i = 0; i < 12; ++i) t.data.push_back(static_cast<float>(i));
  const Matrix m = to_matrix(t);
  CHECK(m.rows() == 4);
  CHECK(m.cols() == 3);
  CHECK(m(3, 2) == 11.0);
}
