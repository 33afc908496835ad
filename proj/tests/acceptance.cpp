// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line; the
// process exits non-zero if any criterion fails. Tolerances are fixed here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "remotedet/cfm.hpp"
#include "remotedet/detector.hpp"
#include "remotedet/gradcheck.hpp"
#include "remotedet/io.hpp"
#include "remotedet/losses.hpp"
#include "remotedet/metrics.hpp"
#include "remotedet/s6.hpp"
#include "remotedet/settings.hpp"
#include "remotedet/ss2d.hpp"
#include "remotedet/train.hpp"

using namespace remotedet;

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kScanTol = 1e-9;
constexpr double kScanSeconds = 10.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr std::size_t kGradMaxParams = 500;
constexpr double kGradSeconds = 120.0;
constexpr double kRoundTripSeconds = 5.0;
constexpr double kReductionTol = 1e-10;
constexpr double kMetricTol = 1e-12;
constexpr double kCiouTol = 1e-12;
constexpr double kAddSlack = 0.005;         // 0.5 mAP points
constexpr double kUnimodalMargin = 0.10;    // 10 mAP points
constexpr double kAblationSeconds = 45 * 60.0;
constexpr double kBenchDrift = 0.10;
constexpr int kBenchIterations = 200;
constexpr int kBenchWarmup = 20;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Reporter {
  std::ostringstream log;
  int failures = 0;

  void line(int id, bool ok, const std::string& what, const std::string& detail) {
    std::ostringstream s;
    s << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << "  " << what << "  [" << detail << "]\n";
    std::cout << s.str() << std::flush;
    log << s.str();
    if (!ok) ++failures;
  }
  void note(const std::string& text) {
    std::cout << "  " << text << "\n" << std::flush;
    log << "  " << text << "\n";
  }
};

// 1. Associative scan against the sequential recurrence.
void scan_oracle(Reporter& r) {
  const auto start = Clock::now();
  Rng rng(1001);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto l = rng.integer(1, 256), d = rng.integer(1, 16), n = rng.integer(1, 16);
    S6Params p = S6Params::initialized(d, n, rng);
    fill_uniform(p.delta_bias, rng, 2.0);
    const Tensor x = random_tensor({l, d}, rng, 2.0);
    worst = std::max(worst, max_abs_diff(s6_forward_scan(x, p), s6_forward_sequential(x, p)));
  }
  const double t = seconds_since(start);
  r.line(1, worst < kScanTol && t < kScanSeconds, "scan equals sequential recurrence on 100 random instances",
         "max abs error " + num(worst) + ", " + num(t) + " s");
}

// Worst relative error over every tensor in `slots`, probing `objective` by central differences.
double param_fd_error(std::vector<Tensor*> slots, const std::vector<Tensor*>& analytic,
                      const std::function<double()>& objective) {
  double worst = 0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    Tensor& slot = *slots[k];
    const Tensor base = slot;
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& v) {
          slot = v;
          const double out = objective();
          slot = base;
          return out;
        },
        base, kGradStep);
    worst = std::max(worst, max_relative_error(*analytic[k], fd));
  }
  return worst;
}

// 2. Hand-written gradients against central differences.
void gradient_suite(Reporter& r) {
  const auto start = Clock::now();

  Rng rng(2002);
  S6Params p = S6Params::initialized(3, 3, rng);
  fill_uniform(p.delta_bias, rng, 1.0);
  fill_uniform(p.log_a, rng, 1.0);
  fill_uniform(p.d_skip, rng, 1.0);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor go = random_tensor({4, 3}, rng);
  S6Grads sg = s6_backward(x, p, go);
  double s6_err = max_relative_error(
      sg.x, finite_diff_grad([&](const Tensor& v) { return dot(s6_forward_sequential(v, p), go); }, x, kGradStep));
  S6Params probe = p;
  const std::size_t s6_params = param_count(p) + x.size();
  s6_err = std::max(s6_err, param_fd_error(param_list(probe), param_list(sg.params),
                                           [&] { return dot(s6_forward_sequential(x, probe), go); }));

  const CfmConfig cc{.channels = 4, .expand = 1, .ffn_hidden = 4, .state_size = 2};
  CfmWeights w = CfmWeights::initialized(cc, rng);
  w.for_each_param("", [&](const std::string& name, Tensor& t) {
    if (name.find("delta_bias") == std::string::npos &&
        (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos ||
         name.find(".b1") != std::string::npos || name.find(".b2") != std::string::npos)) {
      fill_uniform(t, rng, 0.3);
    }
  });
  for (auto& s : w.s6) fill_uniform(s.delta_bias, rng, 1.0);
  const Tensor f1 = random_tensor({4, 3, 3}, rng), f2 = random_tensor({4, 3, 3}, rng);
  const Tensor g1 = random_tensor({4, 3, 3}, rng), g2 = random_tensor({4, 3, 3}, rng);
  CfmCache cache;
  cfm_forward(f1, f2, w, {}, &cache);
  CfmGrads cg = cfm_backward(cache, w, g1, g2);
  auto cfm_obj = [&](const Tensor& a, const Tensor& b, const CfmWeights& ww) {
    const CfmOutput o = cfm_forward(a, b, ww);
    return dot(o.rgb, g1) + dot(o.tir, g2);
  };
  double cfm_err = std::max(
      max_relative_error(cg.f1, finite_diff_grad([&](const Tensor& v) { return cfm_obj(v, f2, w); }, f1, kGradStep)),
      max_relative_error(cg.f2, finite_diff_grad([&](const Tensor& v) { return cfm_obj(f1, v, w); }, f2, kGradStep)));
  CfmWeights cprobe = w;
  const std::size_t cfm_params = param_count(w);
  cfm_err = std::max(cfm_err, param_fd_error(param_list(cprobe), param_list(cg.weights),
                                             [&] { return cfm_obj(f1, f2, cprobe); }));

  LossConfig lc;
  lc.layout.num_classes = 1;
  lc.label_smoothing = 0.1;
  std::vector<Tensor> raw;
  std::size_t loss_params = 0;
  for (double s : lc.layout.strides) {
    const auto g = static_cast<std::int64_t>(32 / s);
    raw.push_back(random_tensor({lc.layout.channels(), g, g}, rng));
    loss_params += raw.back().size();
  }
  std::vector<GroundTruth> gts(2);
  gts[0].box = Box{10.3, 13.1, 9.0, 6.5};
  gts[1].box = Box{22.7, 20.2, 14.0, 17.0};
  const LossResult base = total_loss(raw, gts, lc);
  double loss_err = 0;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& v) {
          auto moved = raw;
          moved[l] = v;
          return total_loss(moved, gts, lc, &base.frozen).total;
        },
        raw[l], kGradStep);
    loss_err = std::max(loss_err, max_relative_error(base.grad[l], fd));
  }

  const double t = seconds_since(start);
  const bool sizes_ok = s6_params <= kGradMaxParams && cfm_params <= kGradMaxParams && loss_params <= kGradMaxParams;
  const bool ok = sizes_ok && s6_err < kGradTol && cfm_err < kGradTol && loss_err < kGradTol && base.matches > 0 &&
                  t < kGradSeconds;
  r.line(2, ok, "S6, fusion block and detection loss gradients match central differences",
         "rel error s6 " + num(s6_err) + " (" + std::to_string(s6_params) + " params), fusion " + num(cfm_err) + " (" +
             std::to_string(cfm_params) + "), loss " + num(loss_err) + " (" + std::to_string(loss_params) + "), " +
             num(t) + " s");
}

// 3. Scan-order round trip.
void round_trip(Reporter& r) {
  const auto start = Clock::now();
  Rng rng(3003);
  bool ok = true;
  int cases = 0;
  for (std::int64_t h = 1; h <= 16; ++h)
    for (std::int64_t w = 1; w <= 16; ++w) {
      const Tensor fm = random_tensor({3, h, w}, rng);
      for (auto dir : kAllDirections) {
        ok = ok && unflatten(flatten(fm, dir), dir, h, w) == fm;
        ++cases;
      }
    }
  const double t = seconds_since(start);
  r.line(3, ok && t < kRoundTripSeconds, "unflatten(flatten(x)) == x for all four directions, H,W in [1,16]",
         std::to_string(cases) + " cases, " + num(t) + " s");
}

double max_raw_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, max_abs_diff(a[i], b[i]));
  return worst;
}

// 4. Fusion-block reductions.
void reductions(Reporter& r) {
  Rng rng(4004);
  CfmConfig cc;
  cc.channels = 8;
  const Tensor a = random_tensor({8, 5, 6}, rng), b = random_tensor({8, 5, 6}, rng);
  const CfmOutput z = cfm_forward(a, b, CfmWeights::zeros(cc));
  const double identity = std::max(max_abs_diff(z.rgb, a), max_abs_diff(z.tir, b));

  DetectorConfig dc;
  dc.width = 0.25;
  Detector cfm = Detector::create(dc, rng);
  const Tensor rgb = random_tensor({3, 64, 64}, rng, 1.0), tir = random_tensor({3, 64, 64}, rng, 1.0);

  Detector silenced = cfm;
  for (auto& w : silenced.cfm) {
    w.s6[2].silence();
    w.s6[3].silence();
  }
  Detector bid = silenced;
  bid.config.fusion = FusionMode::Bid;
  const double bid_diff = max_raw_diff(detector_forward(silenced, rgb, tir), detector_forward(bid, rgb, tir));

  Detector zeroed = cfm;
  for (auto& w : zeroed.cfm) w = CfmWeights::zeros(w.config);
  Detector add = zeroed;
  add.config.fusion = FusionMode::Add;
  const double add_diff = max_raw_diff(detector_forward(zeroed, rgb, tir), detector_forward(add, rgb, tir));

  r.line(4, identity < kReductionTol && bid_diff < kReductionTol && add_diff < kReductionTol,
         "zero fusion block is the residual map; directions 3-4 silenced equal Bid; zeroed block equals Add",
         "max abs diff " + num(identity) + ", " + num(bid_diff) + ", " + num(add_diff));
}

// Precision-recall curve integrated point by point: sum_k (R_k - R_{k-1}) * max_{j >= k} P_j.
double pr_curve_ap(const std::vector<bool>& ranked_tp, int num_gt) {
  const std::size_t n = ranked_tp.size();
  std::vector<double> precision(n), recall(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += ranked_tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / num_gt;
  }
  double ap = 0, prev_recall = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double best = 0;
    for (std::size_t j = k; j < n; ++j) best = std::max(best, precision[j]);
    ap += (recall[k] - prev_recall) * best;
    prev_recall = recall[k];
  }
  return ap;
}

// 5. Metric oracle and loss identity.
void metric_oracle(Reporter& r) {
  std::vector<GroundTruth> gts(3);
  gts[0].box = Box{10, 10, 6, 6};
  gts[1].box = Box{30, 12, 8, 5};
  gts[2].box = Box{50, 45, 7, 9};
  const Box miss{100, 100, 6, 6};
  // Each detection aims at one ground truth (0..2) or at nothing (3); a repeated target is a duplicate.
  int cases = 0;
  double worst = 0;
  std::vector<int> seq;
  std::function<void()> rec = [&] {
    if (!seq.empty()) {
      std::vector<Detection> dets;
      std::vector<bool> taken(3, false), ranked_tp;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const int target = seq[i];
        dets.push_back(Detection{target == 3 ? miss : gts[target].box, 0, 0.9 - 0.1 * static_cast<double>(i)});
        const bool tp = target < 3 && !taken[target];
        if (tp) taken[target] = true;
        ranked_tp.push_back(tp);
      }
      std::reverse(dets.begin(), dets.end());
      worst = std::max(worst, std::abs(*average_precision(dets, gts, 0.5) - pr_curve_ap(ranked_tp, 3)));
      ++cases;
    }
    if (seq.size() == 5) return;
    for (int c = 0; c < 4; ++c) {
      seq.push_back(c);
      rec();
      seq.pop_back();
    }
  };
  rec();

  std::vector<EvalImage> perfect(4);
  Rng rng(5005);
  for (auto& im : perfect)
    for (int k = 0; k < 3; ++k) {
      GroundTruth g;
      g.box = Box{rng.uniform(10, 54), rng.uniform(10, 54), rng.uniform(4, 12), rng.uniform(4, 12)};
      g.class_id = static_cast<int>(rng.integer(0, 2));
      im.gts.push_back(g);
      im.dets.push_back(Detection{g.box, g.class_id, rng.uniform(0.1, 1.0)});
    }
  const MapReport pm = mean_ap(perfect, 3);
  const double ciou = std::abs(ciou_loss(Box{7.5, 3.25, 4.0, 9.0}, Box{7.5, 3.25, 4.0, 9.0}));

  r.line(5, worst < kMetricTol && pm.map50 == 1.0 && pm.map50_95 == 1.0 && ciou < kCiouTol,
         "AP equals the precision-recall oracle on every sequence of up to 5 detections; perfect mAP is 1; CIoU of "
         "identical boxes is 0",
         std::to_string(cases) + " sequences, max diff " + num(worst) + ", mAP50 " + num(pm.map50) + ", mAP50:95 " +
             num(pm.map50_95) + ", CIoU " + num(ciou));
}

struct AblationMode {
  std::string name;
  FusionMode fusion;
  Modality modality;
};

// Training recipe shared by every ablation run.
TrainConfig ablation_config(const AblationMode& mode, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.epochs = 15;
  cfg.batch = 2;
  cfg.lr_init = 2e-2;
  cfg.lr_final = 4e-3;
  cfg.loss_weights.box = 0.2;
  cfg.gt_form = GtForm::Fusion;
  cfg.model.width = 0.25;
  cfg.model.fusion = mode.fusion;
  cfg.model.single_modality = mode.modality;
  return cfg;
}

// 6. Fusion-strategy ablation on modality-exclusive synthetic data.
void ablation(Reporter& r) {
  const auto start = Clock::now();
  const std::vector<AblationMode> modes = {{"tir", FusionMode::None, Modality::TIR},
                                           {"rgb", FusionMode::None, Modality::RGB},
                                           {"add", FusionMode::Add, Modality::TIR},
                                           {"bid", FusionMode::Bid, Modality::TIR},
                                           {"cfm", FusionMode::Cfm, Modality::TIR}};
  const std::vector<std::uint64_t> seeds = {0, 1, 2};
  DatasetSpec spec;
  spec.image_size = 64;
  spec.exclusivity = 0.5;
  std::vector<double> mean(modes.size(), 0.0);
  for (std::uint64_t seed : seeds) {
    const auto train_set = generate_dataset(512, 1000 + seed, spec);
    const auto val_set = generate_dataset(128, 1000 + seed, spec, kValidationIndexBase);
    std::string row = "seed " + std::to_string(seed) + ":";
    for (std::size_t m = 0; m < modes.size(); ++m) {
      const auto run_start = Clock::now();
      const TrainConfig cfg = ablation_config(modes[m], seed);
      const TrainResult result = train(cfg, train_set, val_set);
      const double map50 = evaluate(result.last, val_set, cfg.gt_form, cfg.eval_conf, cfg.eval_iou).map.map50;
      mean[m] += map50 / static_cast<double>(seeds.size());
      row += " " + modes[m].name + " " + num(100 * map50) + " (" + num(seconds_since(run_start)) + " s)";
    }
    r.note(row);
  }
  const double t = seconds_since(start);
  std::string summary = "mean mAP50:";
  for (std::size_t m = 0; m < modes.size(); ++m) summary += " " + modes[m].name + " " + num(100 * mean[m]);
  r.note(summary);
  const double tir = mean[0], rgb = mean[1], add = mean[2], bid = mean[3], cfm = mean[4];
  r.note(std::string("reported only: rgb < add ") + (rgb < add ? "yes" : "no") + ", add <= bid " +
         (add <= bid ? "yes" : "no") + ", bid <= cfm " + (bid <= cfm ? "yes" : "no"));
  const bool ok = tir < add && cfm >= add - kAddSlack && cfm >= tir + kUnimodalMargin && t < kAblationSeconds;
  r.line(6, ok, "thermal-only < Add, CFM >= Add - 0.5 points, CFM >= thermal-only + 10 points, under 45 min",
         "tir " + num(100 * tir) + ", add " + num(100 * add) + ", cfm " + num(100 * cfm) + ", " + num(t / 60) + " min");
}

// 7. Larger-area fusion ground truth.
void fusion_gt(Reporter& r) {
  auto gt = [](Box b, int cls, Modality m) {
    GroundTruth g;
    g.box = b;
    g.class_id = cls;
    g.modality = m;
    return g;
  };
  bool ok = true;
  // Paired, visible box larger: the visible box replaces the thermal one.
  {
    const auto rb = gt(Box{20, 20, 12, 10}, 0, Modality::RGB), tb = gt(Box{20.5, 20, 10, 10}, 0, Modality::TIR);
    const auto out = prepare_gt({rb}, {tb}, GtForm::Fusion);
    ok = ok && out == std::vector<GroundTruth>{rb};
  }
  // Paired, thermal box larger.
  {
    const auto rb = gt(Box{20, 20, 10, 10}, 1, Modality::RGB), tb = gt(Box{20, 21, 10, 12}, 1, Modality::TIR);
    ok = ok && prepare_gt({rb}, {tb}, GtForm::Fusion) == std::vector<GroundTruth>{tb};
  }
  // Unpaired: disjoint boxes and a same-place box of another class are all kept.
  {
    const auto rb = gt(Box{10, 10, 6, 6}, 0, Modality::RGB), tb = gt(Box{40, 40, 6, 6}, 0, Modality::TIR);
    const auto other = gt(Box{40, 40, 6, 6}, 2, Modality::RGB);
    ok = ok && prepare_gt({rb, other}, {tb}, GtForm::Fusion) == std::vector<GroundTruth>{tb, rb, other};
  }
  // Tie in area: the thermal box is kept.
  {
    const auto rb = gt(Box{30, 30, 8, 8}, 2, Modality::RGB), tb = gt(Box{31, 30, 8, 8}, 2, Modality::TIR);
    ok = ok && prepare_gt({rb}, {tb}, GtForm::Fusion) == std::vector<GroundTruth>{tb};
  }
  // Single-modality forms pass the chosen list through untouched.
  {
    const auto rb = gt(Box{30, 30, 8, 8}, 2, Modality::RGB), tb = gt(Box{31, 30, 9, 8}, 2, Modality::TIR);
    ok = ok && prepare_gt({rb}, {tb}, GtForm::RGB) == std::vector<GroundTruth>{rb} &&
         prepare_gt({rb}, {tb}, GtForm::TIR) == std::vector<GroundTruth>{tb};
  }
  r.line(7, ok, "fusion ground truth keeps the larger paired box (paired, unpaired, tie)", "5 hand cases, exact");
}

// 8. Throughput report.
void throughput(Reporter& r) {
  DetectorConfig dc;
  dc.width = 0.25;
  Rng rng(8008);
  const Detector cfm = Detector::create(dc, rng);
  Detector add = cfm;
  add.config.fusion = FusionMode::Add;
  // About one second per timed window, so scheduler noise on a shared core averages out.
  const BenchReport once = bench(cfm, 64, kBenchIterations, kBenchWarmup);
  const BenchReport twice = bench(cfm, 64, 2 * kBenchIterations, kBenchWarmup);
  const BenchReport base = bench(add, 64, kBenchIterations, kBenchWarmup);
  const double drift = std::abs(twice.fps - once.fps) / once.fps;
  const bool definitional = std::abs(once.fps - 1000.0 / once.mean_ms) <= 1e-9 * once.fps;
  const bool stages = once.stage_ms.backbone_ms > 0 && once.stage_ms.fusion_ms > 0 && once.stage_ms.neck_head_ms > 0 &&
                      once.stage_ms.decode_ms > 0;
  r.note("cfm: " + num(once.fps) + " fps (" + num(twice.fps) + " at 2x iterations); backbone " +
         num(once.stage_ms.backbone_ms) + " ms, fusion " + num(once.stage_ms.fusion_ms) + " ms, neck/head " +
         num(once.stage_ms.neck_head_ms) + " ms, decode " + num(once.stage_ms.decode_ms) + " ms");
  r.note("add: " + num(base.fps) + " fps, mean " + num(base.mean_ms) + " ms");
  r.line(8, drift < kBenchDrift && once.mean_ms > base.mean_ms && definitional && stages,
         "bench reports fps and per-stage latency; doubling iterations drifts < 10%; CFM slower than Add",
         "drift " + num(100 * drift) + "%, cfm " + num(once.mean_ms) + " ms vs add " + num(base.mean_ms) + " ms");
}

// 9. Determinism of a full train + eval run.
void determinism(Reporter& r) {
  DatasetSpec spec;
  auto run = [&] {
    const auto train_set = generate_dataset(96, 9, spec);
    const auto val_set = generate_dataset(32, 9, spec, kValidationIndexBase);
    TrainConfig cfg = ablation_config({"cfm", FusionMode::Cfm, Modality::TIR}, 9);
    cfg.epochs = 3;
    const TrainResult result = train(cfg, train_set, val_set);
    const EvalReport rep = evaluate(result.best, val_set, cfg.gt_form, cfg.eval_conf, cfg.eval_iou);
    return std::make_tuple(serialize_checkpoint(result.best), serialize_checkpoint(result.last), rep.map.map50,
                           rep.map.map50_95, rep.detections);
  };
  const auto a = run();
  const auto b = run();
  const bool ok = a == b;
  r.line(9, ok, "two identical train+eval runs give identical metrics and checkpoint bytes",
         "mAP50 " + num(std::get<2>(a)) + " vs " + num(std::get<2>(b)) + ", checkpoint " +
             std::to_string(std::get<0>(a).size()) + " bytes");
}

}  // namespace

// Usage: acceptance [REPORT_FILE] [CRITERION...]; with no criterion numbers every criterion runs.
int main(int argc, char** argv) {
  const std::vector<void (*)(Reporter&)> criteria = {scan_oracle, gradient_suite, round_trip, reductions, metric_oracle,
                                                     ablation,    fusion_gt,      throughput, determinism};
  std::vector<bool> selected(criteria.size(), argc <= 2);
  for (int i = 2; i < argc; ++i) {
    const int id = std::atoi(argv[i]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion '" << argv[i] << "'\n";
      return 2;
    }
    selected[static_cast<std::size_t>(id - 1)] = true;
  }
  Reporter r;
  for (std::size_t i = 0; i < criteria.size(); ++i)
    if (selected[i]) criteria[i](r);
  std::cout << (r.failures == 0 ? "all criteria passed" : std::to_string(r.failures) + " criteria failed") << "\n";
  if (argc > 1) std::ofstream(argv[1]) << r.log.str();
  return r.failures == 0 ? 0 : 1;
}
