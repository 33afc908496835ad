#include "remotedet/box.hpp"

#include <algorithm>

namespace remotedet {

std::string_view modality_name(Modality m) { return m == Modality::RGB ? "rgb" : "tir"; }

double intersection_area(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  return iw > 0 && ih > 0 ? iw * ih : 0.0;
}

double iou(const Box& a, const Box& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Box envelope(const Polygon& p) {
  double x1 = p[0], x2 = p[0], y1 = p[1], y2 = p[1];
  for (int i = 1; i < 4; ++i) {
    x1 = std::min(x1, p[2 * i]);
    x2 = std::max(x2, p[2 * i]);
    y1 = std::min(y1, p[2 * i + 1]);
    y2 = std::max(y2, p[2 * i + 1]);
  }
  return Box::from_corners(x1, y1, x2, y2);
}

Polygon corners(const Box& b) { return {b.x1(), b.y1(), b.x2(), b.y1(), b.x2(), b.y2(), b.x1(), b.y2()}; }

}  // namespace remotedet
