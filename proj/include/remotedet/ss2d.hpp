#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "remotedet/tensor.hpp"

namespace remotedet {

/// Four 2D -> 1D traversal orders over an H x W grid.
enum class ScanDirection { RowMajor = 0, RowMajorReverse = 1, ColMajor = 2, ColMajorReverse = 3 };

inline constexpr std::array<ScanDirection, 4> kAllDirections = {
    ScanDirection::RowMajor, ScanDirection::RowMajorReverse, ScanDirection::ColMajor,
    ScanDirection::ColMajorReverse};

std::string_view direction_name(ScanDirection dir);

/// Sequence position of grid cell (row, col).
std::int64_t scan_position(ScanDirection dir, std::int64_t row, std::int64_t col, std::int64_t height,
                           std::int64_t width);

/// Row-major cell index (row * W + col) visited at sequence position t.
std::int64_t scan_cell(ScanDirection dir, std::int64_t t, std::int64_t height, std::int64_t width);

/// fm[C,H,W] -> seq[H*W, C]; token t is the channel vector at scan_cell(dir, t).
Tensor flatten(const Tensor& fm, ScanDirection dir);

/// Inverse of flatten: seq[H*W, C] -> [C,H,W].
Tensor unflatten(const Tensor& seq, ScanDirection dir, std::int64_t height, std::int64_t width);

/// Patch-level fusion of two flattened modalities by elementwise addition.
Tensor fuse_sequences(const Tensor& a, const Tensor& b);

}  // namespace remotedet
