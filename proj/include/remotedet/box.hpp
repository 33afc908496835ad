#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace remotedet {

enum class Modality { RGB = 0, TIR = 1 };

std::string_view modality_name(Modality m);

/// Axis-aligned box in pixels, center form.
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;

  static Box from_corners(double x1, double y1, double x2, double y2) {
    return Box{(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }
  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }
  bool operator==(const Box&) const = default;
};

using Polygon = std::array<double, 8>;

struct GroundTruth {
  Box box;
  int class_id = 0;
  Modality modality = Modality::RGB;
  std::optional<Polygon> polygon;  // oriented corners as ingested, x1 y1 ... x4 y4
  bool operator==(const GroundTruth&) const = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0;
};

double intersection_area(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// Axis-aligned envelope of a corner polygon.
Box envelope(const Polygon& polygon);
Polygon corners(const Box& box);

}  // namespace remotedet
