#pragma once

#include <vector>

#include "remotedet/box.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

/// Anchor and channel layout shared by the detection head, the decoder and the loss.
/// Each level's raw prediction is [A * (5 + K), H, W] with per-anchor fields
/// (tx, ty, tw, th, obj, class logits...).
struct HeadLayout {
  int num_classes = 3;
  std::vector<double> strides = {8, 16, 32};
  std::vector<double> anchor_multipliers = {0.5, 1.0, 2.0};  // square anchors, relative to the stride

  int anchors() const { return static_cast<int>(anchor_multipliers.size()); }
  int fields() const { return 5 + num_classes; }
  int channels() const { return anchors() * fields(); }
  int levels() const { return static_cast<int>(strides.size()); }
  /// Anchor side length in pixels.
  double anchor_size(int level, int anchor) const { return anchor_multipliers[anchor] * strides[level]; }
};

inline constexpr double kDefaultConfThreshold = 0.25;
inline constexpr double kDefaultNmsThreshold = 0.45;

/// Predicted box offset inside a cell, in grid units: sigmoid(t) * 2 - 0.5.
double decode_offset(double logit);
/// Predicted side length in grid units: (sigmoid(t) * 2)^2 * anchor.
double decode_extent(double logit, double anchor_grid);

/// Greedy per-class suppression; candidates sorted by score, ties by input order.
std::vector<Detection> nms(std::vector<Detection> candidates, double iou_threshold, std::size_t max_detections = 300);

/// Turns raw head outputs into scored boxes and runs NMS.
std::vector<Detection> decode_predictions(const std::vector<Tensor>& raw, const HeadLayout& layout,
                                          double conf_threshold = kDefaultConfThreshold,
                                          double iou_threshold = kDefaultNmsThreshold);

}  // namespace remotedet
