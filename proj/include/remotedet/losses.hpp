#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "remotedet/box.hpp"
#include "remotedet/head.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

struct CiouTerms {
  double iou = 0;
  double distance = 0;  // rho^2 / c^2
  double v = 0;         // aspect-ratio consistency
  double alpha = 0;     // v / ((1 - iou) + v)
  double loss = 0;      // 1 - iou + distance + alpha * v
};

/// Complete-IoU loss terms; throws ValidationError when the target has zero width or height.
CiouTerms ciou_terms(const Box& pred, const Box& target);
double ciou_loss(const Box& pred, const Box& target);
/// Loss with alpha supplied by the caller instead of recomputed.
double ciou_loss_fixed_alpha(const Box& pred, const Box& target, double alpha);
/// d loss / d (cx, cy, w, h) of pred, alpha held constant.
std::array<double, 4> ciou_loss_grad(const Box& pred, const Box& target, double alpha);

/// BCE-with-logits against a target smoothed to target * (1 - eps) + eps / 2.
double smooth_bce(double logit, double target, double eps = 0.0);
double smooth_bce_grad(double logit, double target, double eps = 0.0);

struct LossWeights {
  double box = 0.05;
  double obj = 1.0;
  double cls = 0.5;
};

struct LossConfig {
  HeadLayout layout;
  LossWeights weights;
  double label_smoothing = 0.0;
  double anchor_ratio = 4.0;  // max side ratio between a target and a matching anchor
};

/// One (level, anchor, cell) slot responsible for a ground truth.
struct Assignment {
  int level = 0;
  int anchor = 0;
  std::int64_t cell_x = 0, cell_y = 0;
  std::size_t gt = 0;
  Box target;  // grid units, center relative to the cell origin
};

/// Anchors whose side ratio to the target is within anchor_ratio, at the target's cell and the
/// two neighbouring cells nearest its center.
std::vector<Assignment> assign_targets(const std::vector<GroundTruth>& gts, const LossConfig& config,
                                       const std::vector<std::array<std::int64_t, 2>>& grid_sizes);

/// Values that the gradient treats as constants: the CIoU alpha and objectness target per assignment.
struct LossFreeze {
  std::vector<double> alpha;
  std::vector<double> obj_target;
};

struct LossResult {
  double total = 0, box = 0, obj = 0, cls = 0;
  std::size_t matches = 0;
  std::vector<Tensor> grad;  // d total / d raw, per level
  LossFreeze frozen;
};

/// Weighted CIoU box loss + Smooth-BCE objectness + Smooth-BCE classification for one image.
/// When freeze is given its alpha/objectness values replace the ones derived from the predictions.
LossResult total_loss(const std::vector<Tensor>& raw, const std::vector<GroundTruth>& gts, const LossConfig& config,
                      const LossFreeze* freeze = nullptr);

}  // namespace remotedet
