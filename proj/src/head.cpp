#include "remotedet/head.hpp"

#include <algorithm>
#include <numeric>

#include "remotedet/ops.hpp"

namespace remotedet {

double decode_offset(double logit) { return sigmoid(logit) * 2.0 - 0.5; }

double decode_extent(double logit, double anchor_grid) {
  const double s = sigmoid(logit) * 2.0;
  return s * s * anchor_grid;
}

std::vector<Detection> nms(std::vector<Detection> candidates, double iou_threshold, std::size_t max_detections) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const Detection& c = candidates[idx];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == c.class_id && iou(k.box, c.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) {
      kept.push_back(c);
      if (kept.size() >= max_detections) break;
    }
  }
  return kept;
}

std::vector<Detection> decode_predictions(const std::vector<Tensor>& raw, const HeadLayout& layout,
                                          double conf_threshold, double iou_threshold) {
  if (static_cast<int>(raw.size()) != layout.levels()) throw DimensionError("decode_predictions: level count mismatch");
  std::vector<Detection> candidates;
  const int fields = layout.fields();
  for (int l = 0; l < layout.levels(); ++l) {
    const Tensor& p = raw[l];
    if (p.rank() != 3 || p.dim(0) != layout.channels()) {
      throw DimensionError("decode_predictions: level " + std::to_string(l) + " has shape " +
                           shape_to_string(p.shape()));
    }
    const std::int64_t gh = p.dim(1), gw = p.dim(2);
    const double stride = layout.strides[l];
    for (int a = 0; a < layout.anchors(); ++a) {
      const double anchor_grid = layout.anchor_multipliers[a];
      for (std::int64_t y = 0; y < gh; ++y) {
        for (std::int64_t x = 0; x < gw; ++x) {
          auto field = [&](int f) { return p.at(a * fields + f, y, x); };
          const double obj = sigmoid(field(4));
          int best = 0;
          double best_cls = -1.0;
          for (int k = 0; k < layout.num_classes; ++k) {
            const double s = sigmoid(field(5 + k));
            if (s > best_cls) {
              best_cls = s;
              best = k;
            }
          }
          const double score = obj * best_cls;
          if (score < conf_threshold) continue;
          Box b{(decode_offset(field(0)) + static_cast<double>(x)) * stride,
                (decode_offset(field(1)) + static_cast<double>(y)) * stride,
                decode_extent(field(2), anchor_grid) * stride, decode_extent(field(3), anchor_grid) * stride};
          candidates.push_back(Detection{b, best, score});
        }
      }
    }
  }
  return nms(std::move(candidates), iou_threshold);
}

}  // namespace remotedet
