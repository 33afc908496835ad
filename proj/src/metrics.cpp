#include "remotedet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

#include "remotedet/tensor.hpp"

namespace remotedet {

namespace {

struct ScoredHit {
  double score;
  std::size_t order;
  bool tp;
};

// Greedy matching within one image; appends (score, tp) flags.
void match_image(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, double thr,
                 std::size_t order_base, std::vector<ScoredHit>& out) {
  std::vector<std::size_t> idx(dets.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<bool> used(gts.size(), false);
  for (std::size_t i : idx) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double o = iou(dets[i].box, gts[g].box);
      if (o > best) {
        best = o;
        best_g = g;
      }
    }
    const bool tp = best_g < gts.size() && best >= thr;
    if (tp) used[best_g] = true;
    out.push_back({dets[i].score, order_base + i, tp});
  }
}

double area_under_envelope(std::vector<ScoredHit> hits, std::size_t num_gt) {
  std::stable_sort(hits.begin(), hits.end(), [](const ScoredHit& a, const ScoredHit& b) {
    return a.score != b.score ? a.score > b.score : a.order < b.order;
  });
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    tp += hits[k].tp ? 1 : 0;
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

std::optional<double> class_ap(const std::vector<EvalImage>& images, int cls, double thr) {
  std::vector<ScoredHit> hits;
  std::size_t num_gt = 0, base = 0;
  for (const EvalImage& im : images) {
    std::vector<Detection> d;
    std::vector<GroundTruth> g;
    for (const auto& x : im.dets)
      if (x.class_id == cls) d.push_back(x);
    for (const auto& x : im.gts)
      if (x.class_id == cls) g.push_back(x);
    num_gt += g.size();
    match_image(d, g, thr, base, hits);
    base += d.size();
  }
  if (num_gt == 0) return std::nullopt;
  return area_under_envelope(std::move(hits), num_gt);
}

}  // namespace

std::optional<double> average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                                        double iou_threshold) {
  if (gts.empty()) return std::nullopt;
  std::vector<ScoredHit> hits;
  match_image(dets, gts, iou_threshold, 0, hits);
  return area_under_envelope(std::move(hits), gts.size());
}

double map_at(const std::vector<EvalImage>& images, int num_classes, double iou_threshold) {
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    if (auto ap = class_ap(images, c, iou_threshold)) {
      total += *ap;
      ++counted;
    }
  }
  return counted ? total / counted : 0.0;
}

MapReport mean_ap(const std::vector<EvalImage>& images, int num_classes) {
  if (num_classes <= 0) throw ValidationError("mean_ap: num_classes must be positive");
  MapReport r;
  for (int c = 0; c < num_classes; ++c) r.per_class_ap50.push_back(class_ap(images, c, 0.5));
  double sum = 0.0;
  for (int t = 0; t < 10; ++t) {
    const double thr = 0.5 + 0.05 * t;
    const double m = map_at(images, num_classes, thr);
    if (t == 0) r.map50 = m;
    sum += m;
  }
  r.map50_95 = sum / 10.0;
  return r;
}

MapReport mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts, int num_classes) {
  return mean_ap(std::vector<EvalImage>{EvalImage{dets, gts}}, num_classes);
}

std::vector<GroundTruth> prepare_gt(const std::vector<GroundTruth>& rgb, const std::vector<GroundTruth>& tir, GtForm form) {
  if (form == GtForm::RGB) return rgb;
  if (form == GtForm::TIR) return tir;

  struct Pair {
    double overlap;
    std::size_t t, r;
  };
  std::vector<Pair> candidates;
  for (std::size_t t = 0; t < tir.size(); ++t)
    for (std::size_t r = 0; r < rgb.size(); ++r) {
      if (tir[t].class_id != rgb[r].class_id) continue;
      const double o = iou(tir[t].box, rgb[r].box);
      if (o >= kFusionPairIou) candidates.push_back({o, t, r});
    }
  std::stable_sort(candidates.begin(), candidates.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.overlap, a.t, a.r) < std::tie(a.overlap, b.t, b.r);
  });
  std::vector<std::ptrdiff_t> partner(tir.size(), -1);
  std::vector<bool> rgb_used(rgb.size(), false);
  for (const Pair& p : candidates) {
    if (partner[p.t] >= 0 || rgb_used[p.r]) continue;
    partner[p.t] = static_cast<std::ptrdiff_t>(p.r);
    rgb_used[p.r] = true;
  }
  std::vector<GroundTruth> out;
  for (std::size_t t = 0; t < tir.size(); ++t) {
    if (partner[t] >= 0 && rgb[partner[t]].box.area() > tir[t].box.area()) out.push_back(rgb[partner[t]]);
    else out.push_back(tir[t]);
  }
  for (std::size_t r = 0; r < rgb.size(); ++r)
    if (!rgb_used[r]) out.push_back(rgb[r]);
  return out;
}

}  // namespace remotedet
