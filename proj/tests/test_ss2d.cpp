#include <set>

#include "doctest.h"
#include "remotedet/params.hpp"
#include "remotedet/ss2d.hpp"

using namespace remotedet;

namespace {
std::vector<double> values_of(const Tensor& t) { return t.storage(); }
}  // namespace

TEST_CASE("four directions on a 2x2 grid") {
  const Tensor grid({1, 2, 2}, {1, 2, 3, 4});
  CHECK(values_of(flatten(grid, ScanDirection::RowMajor)) == std::vector<double>{1, 2, 3, 4});
  CHECK(values_of(flatten(grid, ScanDirection::RowMajorReverse)) == std::vector<double>{4, 3, 2, 1});
  CHECK(values_of(flatten(grid, ScanDirection::ColMajor)) == std::vector<double>{1, 3, 2, 4});
  CHECK(values_of(flatten(grid, ScanDirection::ColMajorReverse)) == std::vector<double>{4, 2, 3, 1});
}

TEST_CASE("single cell is the same in every direction") {
  const Tensor cell({3, 1, 1}, {7, 8, 9});
  for (auto dir : kAllDirections) CHECK(flatten(cell, dir) == Tensor({1, 3}, {7, 8, 9}));
}

TEST_CASE("unflatten col-major example") {
  const Tensor seq({4, 1}, {1, 2, 3, 4});
  CHECK(values_of(unflatten(seq, ScanDirection::ColMajor, 2, 2)) == std::vector<double>{1, 3, 2, 4});
  CHECK_THROWS_AS(unflatten(seq, ScanDirection::ColMajor, 3, 2), DimensionError);
}

TEST_CASE("round trip and direction sum") {
  Rng rng(1);
  const Tensor x = random_tensor({3, 4, 5}, rng);
  Tensor total({3, 4, 5});
  for (auto dir : kAllDirections) {
    const Tensor back = unflatten(flatten(x, dir), dir, 4, 5);
    CHECK(back == x);
    total += back;
  }
  CHECK(total == x * 4.0);
}

TEST_CASE("reverse directions mirror their forward pair") {
  for (std::int64_t h = 1; h <= 6; ++h)
    for (std::int64_t w = 1; w <= 6; ++w)
      for (std::int64_t t = 0; t < h * w; ++t) {
        CHECK(scan_cell(ScanDirection::RowMajorReverse, t, h, w) == scan_cell(ScanDirection::RowMajor, h * w - 1 - t, h, w));
        CHECK(scan_cell(ScanDirection::ColMajorReverse, t, h, w) == scan_cell(ScanDirection::ColMajor, h * w - 1 - t, h, w));
      }
}

TEST_CASE("every direction is a bijection with a consistent inverse") {
  for (std::int64_t h = 1; h <= 16; ++h)
    for (std::int64_t w = 1; w <= 16; ++w)
      for (auto dir : kAllDirections) {
        std::set<std::int64_t> seen;
        for (std::int64_t t = 0; t < h * w; ++t) {
          const auto cell = scan_cell(dir, t, h, w);
          seen.insert(cell);
          CHECK(scan_position(dir, cell / w, cell % w, h, w) == t);
        }
        CHECK(static_cast<std::int64_t>(seen.size()) == h * w);
      }
}

TEST_CASE("consecutive tokens are grid neighbours except at line breaks") {
  for (std::int64_t h = 1; h <= 8; ++h)
    for (std::int64_t w = 1; w <= 8; ++w) {
      int row_breaks = 0, col_breaks = 0;
      for (std::int64_t t = 0; t + 1 < h * w; ++t) {
        const auto a = scan_cell(ScanDirection::RowMajor, t, h, w), b = scan_cell(ScanDirection::RowMajor, t + 1, h, w);
        if (!(a / w == b / w && b % w == a % w + 1)) ++row_breaks;
        const auto c = scan_cell(ScanDirection::ColMajor, t, h, w), d = scan_cell(ScanDirection::ColMajor, t + 1, h, w);
        if (!(c % w == d % w && d / w == c / w + 1)) ++col_breaks;
      }
      CHECK(row_breaks == h - 1);
      CHECK(col_breaks == w - 1);
    }
}

TEST_CASE("fusion is addition and commutes with flatten") {
  Rng rng(2);
  const Tensor a = random_tensor({6, 3}, rng), b = random_tensor({6, 3}, rng);
  CHECK(fuse_sequences(a, Tensor({6, 3})) == a);
  CHECK(fuse_sequences(a, b) == fuse_sequences(b, a));
  CHECK_THROWS_AS(fuse_sequences(a, Tensor({3, 6})), DimensionError);
  const Tensor x = random_tensor({3, 2, 3}, rng), y = random_tensor({3, 2, 3}, rng);
  for (auto dir : kAllDirections) CHECK(fuse_sequences(flatten(x, dir), flatten(y, dir)) == flatten(x + y, dir));
}
