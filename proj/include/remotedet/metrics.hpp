#pragma once

#include <optional>
#include <vector>

#include "remotedet/box.hpp"

namespace remotedet {

/// Single-class average precision with all-points interpolation. Detections are matched greedily in
/// descending score order (input order breaks ties) to the best-overlapping unmatched ground truth.
/// Returns nullopt when there are no ground truths.
std::optional<double> average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                        double iou_threshold);

struct MapReport {
  double map50 = 0;
  double map50_95 = 0;
  std::vector<std::optional<double>> per_class_ap50;  // nullopt for classes without ground truth
};

/// Per-image detections and ground truths; class ids in [0, num_classes).
struct EvalImage {
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
};

/// Mean over classes with ground truth, at IoU 0.5 and averaged over 0.5:0.05:0.95.
MapReport mean_ap(const std::vector<EvalImage>& images, int num_classes);
MapReport mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes);

/// Mean AP over classes at a single threshold; classes without ground truth are skipped.
double map_at(const std::vector<EvalImage>& images, int num_classes, double iou_threshold);

enum class GtForm { RGB, TIR, Fusion };

/// Selects the annotation set for training/evaluation. Fusion pairs same-class boxes across
/// modalities (IoU >= 0.5, highest first) and keeps the larger one, TIR on ties.
std::vector<GroundTruth> prepare_gt(const std::vector<GroundTruth>& rgb, const std::vector<GroundTruth>& tir, GtForm form);

inline constexpr double kFusionPairIou = 0.5;

}  // namespace remotedet
