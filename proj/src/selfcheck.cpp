#include "remotedet/selfcheck.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "remotedet/cfm.hpp"
#include "remotedet/detector.hpp"
#include "remotedet/gradcheck.hpp"
#include "remotedet/losses.hpp"
#include "remotedet/metrics.hpp"
#include "remotedet/s6.hpp"
#include "remotedet/ss2d.hpp"

namespace remotedet {

namespace {

double scan_agreement() {
  Rng rng(101);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const auto l = rng.integer(1, 128), d = rng.integer(1, 8), n = rng.integer(1, 8);
    const S6Params p = S6Params::initialized(d, n, rng);
    const Tensor x = random_tensor({l, d}, rng);
    worst = std::max(worst, max_abs_diff(s6_forward_scan(x, p), s6_forward_sequential(x, p)));
  }
  return worst;
}

bool scan_round_trip() {
  Rng rng(102);
  for (std::int64_t h = 1; h <= 16; ++h)
    for (std::int64_t w = 1; w <= 16; ++w) {
      const Tensor fm = random_tensor({2, h, w}, rng);
      for (auto dir : kAllDirections)
        if (unflatten(flatten(fm, dir), dir, h, w) != fm) return false;
    }
  return true;
}

double cfm_identity() {
  Rng rng(103);
  CfmConfig cfg;
  cfg.channels = 4;
  const CfmWeights w = CfmWeights::zeros(cfg);
  const Tensor a = random_tensor({4, 3, 5}, rng), b = random_tensor({4, 3, 5}, rng);
  const auto out = cfm_forward(a, b, w);
  return std::max(max_abs_diff(out.rgb, a), max_abs_diff(out.tir, b));
}

double s6_gradient() {
  Rng rng(104);
  S6Params p = S6Params::initialized(2, 2, rng);
  fill_uniform(p.delta_bias, rng, 1.0);
  const Tensor x = random_tensor({3, 2}, rng);
  const Tensor probe = random_tensor({3, 2}, rng);
  const S6Grads g = s6_backward(x, p, probe);
  const Tensor fd = finite_diff_grad([&](const Tensor& v) { return dot(s6_forward_sequential(v, p), probe); }, x);
  return max_relative_error(g.x, fd);
}

double loss_gradient() {
  LossConfig cfg;
  cfg.layout.num_classes = 1;
  Rng rng(105);
  std::vector<Tensor> raw;
  for (double s : cfg.layout.strides) {
    const auto g = static_cast<std::int64_t>(32 / s);
    raw.push_back(random_tensor({cfg.layout.channels(), g, g}, rng));
  }
  std::vector<GroundTruth> gts(1);
  gts[0].box = Box{12.3, 17.9, 10.0, 7.0};
  const auto base = total_loss(raw, gts, cfg);
  double worst = 0;
  for (std::size_t l = 0; l < raw.size(); ++l) {
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& v) {
          auto moved = raw;
          moved[l] = v;
          return total_loss(moved, gts, cfg, &base.frozen).total;
        },
        raw[l]);
    worst = std::max(worst, max_relative_error(base.grad[l], fd));
  }
  return worst;
}

double detector_add_reduction() {
  Rng rng(106);
  DetectorConfig cfg;
  cfg.width = 0.125;
  Detector cfm = Detector::create(cfg, rng);
  for (auto& w : cfm.cfm) w = CfmWeights::zeros(w.config);
  Detector add = cfm;
  add.config.fusion = FusionMode::Add;
  const Tensor a = random_tensor({3, 32, 32}, rng), b = random_tensor({3, 32, 32}, rng);
  const auto ra = detector_forward(cfm, a, b), rb = detector_forward(add, a, b);
  double worst = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, max_abs_diff(ra[i], rb[i]));
  return worst;
}

}  // namespace

int run_selfcheck(std::ostream& out) {
  int failures = 0;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << "\n";
    if (!ok) ++failures;
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return std::string(buf);
  };

  const double scan = scan_agreement();
  report("scan-vs-recurrence", scan < 1e-9, "max abs diff " + num(scan));
  report("scan-order-round-trip", scan_round_trip(), "all directions, H,W in [1,16]");
  const double ident = cfm_identity();
  report("fusion-block-zero-weights", ident < 1e-12, "max abs diff " + num(ident));
  const double add = detector_add_reduction();
  report("zeroed-fusion-equals-add", add < 1e-10, "max abs diff " + num(add));
  const double ciou = std::abs(ciou_loss(Box{5, 5, 3, 4}, Box{5, 5, 3, 4}));
  report("ciou-identical-boxes", ciou < 1e-12, "loss " + num(ciou));
  const Box b{10, 10, 4, 4};
  GroundTruth gt;
  gt.box = b;
  const auto ap = average_precision({Detection{b, 0, 1.0}}, {gt}, 0.5);
  report("ap-perfect-detection", ap && *ap == 1.0, "AP " + num(ap.value_or(-1)));
  const double s6g = s6_gradient();
  report("s6-gradient", s6g < 1e-4, "max rel error " + num(s6g));
  const double lg = loss_gradient();
  report("loss-gradient", lg < 1e-4, "max rel error " + num(lg));
  return failures;
}

}  // namespace remotedet
