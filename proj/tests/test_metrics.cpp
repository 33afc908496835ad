#include <algorithm>
#include <functional>

#include "doctest.h"
#include "remotedet/metrics.hpp"
#include "remotedet/params.hpp"

using namespace remotedet;

namespace {

GroundTruth gt_at(Box b, int cls = 0, Modality m = Modality::TIR) {
  GroundTruth g;
  g.box = b;
  g.class_id = cls;
  g.modality = m;
  return g;
}

// Area under the precision envelope written as a sum over recall levels:
// AP = (1/G) * sum_g max_{k : TP_k >= g} TP_k / k.
double envelope_oracle(const std::vector<int>& tp_prefix, int num_gt) {
  double ap = 0.0;
  for (int g = 1; g <= num_gt; ++g) {
    double best = 0.0;
    for (std::size_t k = 0; k < tp_prefix.size(); ++k)
      if (tp_prefix[k] >= g) best = std::max(best, static_cast<double>(tp_prefix[k]) / static_cast<double>(k + 1));
    ap += best;
  }
  return ap / num_gt;
}

}  // namespace

TEST_CASE("average_precision: single perfect detection") {
  const auto g = gt_at(Box{10, 10, 4, 4});
  CHECK(*average_precision({Detection{g.box, 0, 0.9}}, {g}, 0.5) == 1.0);
}

TEST_CASE("average_precision: false positive ranked first") {
  const auto g = gt_at(Box{10, 10, 4, 4});
  const std::vector<Detection> dets = {{Box{50, 50, 4, 4}, 0, 0.9}, {g.box, 0, 0.8}};
  CHECK(*average_precision(dets, {g}, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("average_precision: empty inputs") {
  CHECK(!average_precision({}, {}, 0.5).has_value());
  CHECK(*average_precision({}, {gt_at(Box{1, 1, 1, 1})}, 0.5) == 0.0);
}

TEST_CASE("average_precision: exhaustive sequences over two ground truths") {
  const std::vector<GroundTruth> gts = {gt_at(Box{10, 10, 6, 6}), gt_at(Box{40, 40, 6, 6})};
  const Box miss{100, 100, 6, 6};
  int cases = 0;
  std::function<void(std::vector<int>&)> rec = [&](std::vector<int>& seq) {
    if (!seq.empty()) {
      std::vector<Detection> dets;
      std::vector<int> prefix;
      std::vector<bool> hit(2, false);
      int tp = 0;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const Box b = seq[i] == 2 ? miss : gts[seq[i]].box;
        dets.push_back(Detection{b, 0, 1.0 - 0.1 * static_cast<double>(i)});
        if (seq[i] < 2 && !hit[seq[i]]) {
          hit[seq[i]] = true;
          ++tp;
        }
        prefix.push_back(tp);
      }
      // Evaluate in reversed input order so the score sort is exercised too.
      std::reverse(dets.begin(), dets.end());
      CHECK(std::abs(*average_precision(dets, gts, 0.5) - envelope_oracle(prefix, 2)) < 1e-15);
      ++cases;
    }
    if (seq.size() == 5) return;
    for (int c = 0; c < 3; ++c) {
      seq.push_back(c);
      rec(seq);
      seq.pop_back();
    }
  };
  std::vector<int> seq;
  rec(seq);
  CHECK(cases == 3 + 9 + 27 + 81 + 243);
}

TEST_CASE("average_precision: range, monotonicity and permutation safety") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GroundTruth> gts;
    const int ng = static_cast<int>(rng.integer(1, 5));
    for (int i = 0; i < ng; ++i) gts.push_back(gt_at(Box{rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(4, 12), rng.uniform(4, 12)}));
    std::vector<Detection> dets;
    const int nd = static_cast<int>(rng.integer(0, 8));
    for (int i = 0; i < nd; ++i) {
      Box b = gts[static_cast<std::size_t>(rng.integer(0, ng - 1))].box;
      b.cx += rng.uniform(-3, 3);
      b.cy += rng.uniform(-3, 3);
      dets.push_back(Detection{b, 0, rng.uniform(0.01, 0.99)});
    }
    const double ap = *average_precision(dets, gts, 0.5);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);

    auto shuffled = dets;
    for (std::size_t i = shuffled.size(); i > 1; --i)
      std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    CHECK(*average_precision(shuffled, gts, 0.5) == ap);

    // A new top-scored hit on a ground truth no detection reaches can only help.
    for (const auto& g : gts) {
      const bool covered = std::any_of(dets.begin(), dets.end(), [&](const Detection& d) { return iou(d.box, g.box) >= 0.5; });
      if (covered) continue;
      auto better = dets;
      better.push_back(Detection{g.box, 0, 1.0});
      CHECK(*average_precision(better, gts, 0.5) >= ap);
      break;
    }
  }
}

TEST_CASE("mean_ap: perfect detections score exactly one") {
  std::vector<GroundTruth> gts = {gt_at(Box{10, 10, 5, 5}, 0), gt_at(Box{30, 30, 8, 6}, 1), gt_at(Box{50, 12, 7, 9}, 2)};
  std::vector<Detection> dets;
  for (const auto& g : gts) dets.push_back(Detection{g.box, g.class_id, 1.0});
  const auto r = mean_ap(dets, gts, 3);
  CHECK(r.map50 == 1.0);
  CHECK(r.map50_95 == 1.0);
}

TEST_CASE("mean_ap: one of two classes perfect") {
  std::vector<GroundTruth> gts = {gt_at(Box{10, 10, 5, 5}, 0), gt_at(Box{30, 30, 8, 6}, 1)};
  const auto r = mean_ap({Detection{gts[0].box, 0, 0.7}}, gts, 2);
  CHECK(r.map50 == 0.5);
  CHECK(*r.per_class_ap50[1] == 0.0);
}

TEST_CASE("mean_ap: classes without ground truth are excluded") {
  const auto r = mean_ap({Detection{Box{10, 10, 5, 5}, 0, 0.9}}, {gt_at(Box{10, 10, 5, 5}, 0)}, 3);
  CHECK(r.map50 == 1.0);
  CHECK(!r.per_class_ap50[1].has_value());
}

TEST_CASE("mean_ap: equals the mean of per-class AP on random cases") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundTruth> gts;
    std::vector<Detection> dets;
    for (int i = 0; i < 6; ++i) {
      gts.push_back(gt_at(Box{rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(4, 12), rng.uniform(4, 12)},
                          static_cast<int>(rng.integer(0, 2))));
    }
    for (int i = 0; i < 8; ++i) {
      Box b = gts[static_cast<std::size_t>(rng.integer(0, 5))].box;
      b.cx += rng.uniform(-2, 2);
      b.w *= rng.uniform(0.8, 1.2);
      dets.push_back(Detection{b, static_cast<int>(rng.integer(0, 2)), rng.uniform(0, 1)});
    }
    const auto r = mean_ap(dets, gts, 3);
    for (double thr : {0.5, 0.75}) {
      double sum = 0;
      int n = 0;
      for (int c = 0; c < 3; ++c) {
        std::vector<Detection> dc;
        std::vector<GroundTruth> gc;
        for (const auto& d : dets)
          if (d.class_id == c) dc.push_back(d);
        for (const auto& g : gts)
          if (g.class_id == c) gc.push_back(g);
        if (auto ap = average_precision(dc, gc, thr)) {
          sum += *ap;
          ++n;
        }
      }
      const double expected = n ? sum / n : 0.0;
      if (thr == 0.5) CHECK(std::abs(r.map50 - expected) < 1e-12);
      CHECK(std::abs(map_at({EvalImage{dets, gts}}, 3, thr) - expected) < 1e-12);
    }
    CHECK(r.map50_95 >= 0.0);
    CHECK(r.map50_95 <= r.map50 + 1e-15);
  }
}

TEST_CASE("prepare_gt: single-modality forms pass through") {
  const std::vector<GroundTruth> rgb = {gt_at(Box{1, 1, 2, 2}, 0, Modality::RGB)};
  const std::vector<GroundTruth> tir = {gt_at(Box{5, 5, 2, 2}, 1), gt_at(Box{9, 9, 2, 2}, 0)};
  CHECK(prepare_gt(rgb, tir, GtForm::RGB) == rgb);
  CHECK(prepare_gt(rgb, tir, GtForm::TIR) == tir);
}

TEST_CASE("prepare_gt: fusion keeps the larger paired box") {
  const auto r = gt_at(Box{20, 20, 10, 10}, 2, Modality::RGB);
  const auto t = gt_at(Box{20, 20, 12, 12}, 2, Modality::TIR);
  CHECK(iou(r.box, t.box) == doctest::Approx(100.0 / 144.0));
  const auto out = prepare_gt({r}, {t}, GtForm::Fusion);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == t);
  const auto swapped = prepare_gt({gt_at(t.box, 2, Modality::RGB)}, {gt_at(r.box, 2)}, GtForm::Fusion);
  REQUIRE(swapped.size() == 1);
  CHECK(swapped[0].modality == Modality::RGB);
  CHECK(swapped[0].box == t.box);
}

TEST_CASE("prepare_gt: ties keep the thermal box") {
  const std::vector<GroundTruth> tir = {gt_at(Box{20, 20, 10, 10}, 0), gt_at(Box{50, 40, 6, 8}, 1)};
  std::vector<GroundTruth> rgb;
  for (auto g : tir) {
    g.modality = Modality::RGB;
    rgb.push_back(g);
  }
  CHECK(prepare_gt(rgb, tir, GtForm::Fusion) == tir);
}

TEST_CASE("prepare_gt: disjoint or cross-class boxes are all retained") {
  const auto r = gt_at(Box{10, 10, 6, 6}, 0, Modality::RGB);
  const auto t = gt_at(Box{40, 40, 6, 6}, 0);
  const auto out = prepare_gt({r}, {t}, GtForm::Fusion);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == t);
  CHECK(out[1] == r);
  const auto cross = prepare_gt({gt_at(t.box, 1, Modality::RGB)}, {t}, GtForm::Fusion);
  CHECK(cross.size() == 2);
}

TEST_CASE("prepare_gt: highest overlap pairs first") {
  // One thermal box overlapping two visible boxes; the better overlap wins the pairing.
  const auto t = gt_at(Box{20, 20, 10, 10}, 0);
  const auto r_far = gt_at(Box{22, 20, 10, 10}, 0, Modality::RGB);
  const auto r_near = gt_at(Box{20.5, 20, 11, 11}, 0, Modality::RGB);
  const auto out = prepare_gt({r_far, r_near}, {t}, GtForm::Fusion);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == r_near);
  CHECK(out[1] == r_far);
}
