#include "remotedet/ss2d.hpp"

namespace remotedet {

std::string_view direction_name(ScanDirection dir) {
  switch (dir) {
    case ScanDirection::RowMajor: return "row-major";
    case ScanDirection::RowMajorReverse: return "row-major-reverse";
    case ScanDirection::ColMajor: return "col-major";
    case ScanDirection::ColMajorReverse: return "col-major-reverse";
  }
  return "unknown";
}

std::int64_t scan_position(ScanDirection dir, std::int64_t row, std::int64_t col, std::int64_t height,
                           std::int64_t width) {
  const std::int64_t last = height * width - 1;
  switch (dir) {
    case ScanDirection::RowMajor: return row * width + col;
    case ScanDirection::RowMajorReverse: return last - (row * width + col);
    case ScanDirection::ColMajor: return col * height + row;
    case ScanDirection::ColMajorReverse: return last - (col * height + row);
  }
  return -1;
}

std::int64_t scan_cell(ScanDirection dir, std::int64_t t, std::int64_t height, std::int64_t width) {
  const std::int64_t last = height * width - 1;
  switch (dir) {
    case ScanDirection::RowMajor: return t;
    case ScanDirection::RowMajorReverse: return last - t;
    case ScanDirection::ColMajor: return (t % height) * width + t / height;
    case ScanDirection::ColMajorReverse: {
      const std::int64_t s = last - t;
      return (s % height) * width + s / height;
    }
  }
  return -1;
}

Tensor flatten(const Tensor& fm, ScanDirection dir) {
  if (fm.rank() != 3) throw DimensionError("flatten: needs [C,H,W], got " + shape_to_string(fm.shape()));
  const std::int64_t c = fm.dim(0), h = fm.dim(1), w = fm.dim(2), hw = h * w;
  Tensor seq({hw, c});
  for (std::int64_t t = 0; t < hw; ++t) {
    const std::int64_t cell = scan_cell(dir, t, h, w);
    for (std::int64_t ch = 0; ch < c; ++ch) seq[t * c + ch] = fm[ch * hw + cell];
  }
  return seq;
}

Tensor unflatten(const Tensor& seq, ScanDirection dir, std::int64_t height, std::int64_t width) {
  if (seq.rank() != 2 || seq.dim(0) != height * width) {
    throw DimensionError("unflatten: sequence " + shape_to_string(seq.shape()) + " does not cover a " +
                         std::to_string(height) + "x" + std::to_string(width) + " grid");
  }
  const std::int64_t c = seq.dim(1), hw = height * width;
  Tensor fm({c, height, width});
  for (std::int64_t t = 0; t < hw; ++t) {
    const std::int64_t cell = scan_cell(dir, t, height, width);
    for (std::int64_t ch = 0; ch < c; ++ch) fm[ch * hw + cell] = seq[t * c + ch];
  }
  return fm;
}

Tensor fuse_sequences(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "fuse_sequences");
  return a + b;
}

}  // namespace remotedet
