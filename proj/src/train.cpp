#include "remotedet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace remotedet {

namespace {

using Clock = std::chrono::steady_clock;

LossConfig loss_config(const TrainConfig& cfg) {
  LossConfig l;
  l.layout = cfg.model.layout();
  l.weights = cfg.loss_weights;
  l.label_smoothing = cfg.label_smoothing;
  return l;
}

std::vector<GroundTruth> targets(const SamplePair& s, GtForm form) { return prepare_gt(s.rgb_gts, s.tir_gts, form); }

}  // namespace

std::string_view gt_form_name(GtForm form) {
  switch (form) {
    case GtForm::RGB: return "rgb";
    case GtForm::TIR: return "tir";
    case GtForm::Fusion: return "fusion";
  }
  return "?";
}

GtForm parse_gt_form(std::string_view name) {
  for (auto f : {GtForm::RGB, GtForm::TIR, GtForm::Fusion})
    if (gt_form_name(f) == name) return f;
  throw ValidationError("unknown gt form '" + std::string(name) + "' (expected rgb, tir or fusion)");
}

void TrainConfig::validate() const {
  if (!(lr_init > 0) || !(lr_final > 0) || lr_final > lr_init) {
    throw ValidationError("train: learning rates must satisfy lr_init >= lr_final > 0");
  }
  if (epochs < 1) throw ValidationError("train: epochs must be at least 1");
  if (batch < 1) throw ValidationError("train: batch must be at least 1");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("train: momentum must be in [0,1)");
  if (!(weight_decay >= 0)) throw ValidationError("train: weight decay must be non-negative");
  if (!(label_smoothing >= 0 && label_smoothing < 0.5)) throw ValidationError("train: label smoothing must be in [0,0.5)");
  model.validate();
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (cfg.epochs <= 1) return cfg.lr_init;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.lr_init + (cfg.lr_final - cfg.lr_init) * t;
}

TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& train_set, const std::vector<SamplePair>& val_set,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("train: empty training set");
  Rng rng(cfg.seed);
  Detector net = Detector::create(cfg.model, rng);
  Detector velocity = zeros_like_params(net);
  const LossConfig lcfg = loss_config(cfg);

  auto params = param_list(net);
  auto vel = param_list(velocity);

  TrainResult result;
  result.best_map50 = -1.0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = Clock::now();
    const double lr = learning_rate(cfg, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    }
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    int step = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch), ++step) {
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
      Detector grads = zeros_like_params(net);
      for (std::size_t k = b; k < end; ++k) {
        SamplePair sample = train_set[order[k]];
        if (cfg.augment) augment(sample, rng);
        DetectorCache cache;
        const auto raw = detector_forward(net, sample.rgb, sample.tir, &cache);
        const LossResult loss = total_loss(raw, targets(sample, cfg.gt_form), lcfg);
        if (!std::isfinite(loss.total)) throw DivergenceError(epoch, step, "non-finite loss");
        log.box += loss.box;
        log.obj += loss.obj;
        log.cls += loss.cls;
        log.total += loss.total;
        detector_backward(net, cache, loss.grad, grads);
      }
      // Per-sample losses are summed over the batch rather than averaged.
      auto g = param_list(grads);
      double norm2 = 0;
      for (auto* t : g)
        for (double v : t->values()) norm2 += v * v;
      if (!std::isfinite(norm2)) throw DivergenceError(epoch, step, "non-finite gradient");
      const double norm = std::sqrt(norm2);
      const double clip = cfg.grad_clip > 0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& w = params[p]->storage();
        auto& v = vel[p]->storage();
        const auto& gp = g[p]->storage();
        for (std::size_t j = 0; j < w.size(); ++j) {
          v[j] = cfg.momentum * v[j] + gp[j] * clip + cfg.weight_decay * w[j];
          w[j] -= lr * v[j];
        }
      }
    }
    const double n = static_cast<double>(train_set.size());
    log.box /= n;
    log.obj /= n;
    log.cls /= n;
    log.total /= n;
    if (!val_set.empty()) {
      const EvalReport rep = evaluate(net, val_set, cfg.gt_form, cfg.eval_conf, cfg.eval_iou);
      log.val_map50 = rep.map.map50;
      log.val_map50_95 = rep.map.map50_95;
    }
    log.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(log);
    if (log.val_map50 > result.best_map50) {
      result.best_map50 = log.val_map50;
      result.best_epoch = epoch;
      result.best = net;
    }
    if (on_epoch) on_epoch(log);
  }
  result.last = net;
  return result;
}

LossResult dataset_loss(const Detector& net, const std::vector<SamplePair>& data, GtForm form, const LossConfig& loss) {
  LossResult sum;
  for (const auto& s : data) {
    const auto r = total_loss(detector_forward(net, s.rgb, s.tir), targets(s, form), loss);
    sum.total += r.total;
    sum.box += r.box;
    sum.obj += r.obj;
    sum.cls += r.cls;
    sum.matches += r.matches;
  }
  const double n = static_cast<double>(std::max<std::size_t>(data.size(), 1));
  sum.total /= n;
  sum.box /= n;
  sum.obj /= n;
  sum.cls /= n;
  return sum;
}

EvalReport evaluate(const Detector& net, const std::vector<SamplePair>& data, GtForm form, double conf_threshold,
                    double iou_threshold) {
  std::vector<EvalImage> images(data.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < data.size(); ++i) {
    images[i].dets = detect(net, data[i].rgb, data[i].tir, conf_threshold, iou_threshold);
    images[i].gts = targets(data[i], form);
  }
  EvalReport r;
  r.map = mean_ap(images, net.config.num_classes);
  r.images = images.size();
  for (const auto& im : images) {
    r.detections += im.dets.size();
    r.ground_truths += im.gts.size();
  }
  return r;
}

std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %10s\n", "class", "AP50");
  out += line;
  for (std::size_t c = 0; c < report.map.per_class_ap50.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    const auto& ap = report.map.per_class_ap50[c];
    if (ap) std::snprintf(line, sizeof line, "%-14s %10.4f\n", name.c_str(), *ap);
    else std::snprintf(line, sizeof line, "%-14s %10s\n", name.c_str(), "-");
    out += line;
  }
  std::snprintf(line, sizeof line, "%-14s %10.4f\n%-14s %10.4f\n", "mAP50", report.map.map50, "mAP50_95",
                report.map.map50_95);
  out += line;
  return out;
}

std::string format_report_kv(const EvalReport& report, const std::vector<std::string>& class_names) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "map50=%.17g\nmap50_95=%.17g\n", report.map.map50, report.map.map50_95);
  out += line;
  for (std::size_t c = 0; c < report.map.per_class_ap50.size(); ++c) {
    const std::string name = c < class_names.size() ? class_names[c] : "class" + std::to_string(c);
    const auto& ap = report.map.per_class_ap50[c];
    if (ap) std::snprintf(line, sizeof line, "ap50.%s=%.17g\n", name.c_str(), *ap);
    else std::snprintf(line, sizeof line, "ap50.%s=nan\n", name.c_str());
    out += line;
  }
  out += "images=" + std::to_string(report.images) + "\ndetections=" + std::to_string(report.detections) +
         "\nground_truths=" + std::to_string(report.ground_truths) + "\n";
  return out;
}

BenchReport bench(const Detector& net, std::int64_t image_size, int iterations, int warmup, std::uint64_t seed) {
  if (iterations < 10) throw ValidationError("bench: at least 10 timed iterations are required");
  if (warmup < 0) throw ValidationError("bench: warmup must be non-negative");
  Rng rng(seed);
  const Tensor rgb = random_tensor({3, image_size, image_size}, rng, 1.0);
  const Tensor tir = random_tensor({3, image_size, image_size}, rng, 1.0);
  for (int i = 0; i < warmup; ++i) detect(net, rgb, tir, kDefaultConfThreshold, kDefaultNmsThreshold);
  BenchReport r;
  r.iterations = iterations;
  r.image_size = image_size;
  StageTimes total;
  for (int i = 0; i < iterations; ++i) {
    const auto start = Clock::now();
    detect(net, rgb, tir, kDefaultConfThreshold, kDefaultNmsThreshold, &total);
    r.latencies_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  const double n = iterations;
  r.mean_ms = std::accumulate(r.latencies_ms.begin(), r.latencies_ms.end(), 0.0) / n;
  auto sorted = r.latencies_ms;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * n)) - 1;
    return sorted[std::min(idx, sorted.size() - 1)];
  };
  r.p50_ms = pct(0.5);
  r.p95_ms = pct(0.95);
  r.fps = 1000.0 / r.mean_ms;
  r.stage_ms = StageTimes{total.backbone_ms / n, total.fusion_ms / n, total.neck_head_ms / n, total.decode_ms / n};
  return r;
}

std::string format_bench(const BenchReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "image_size=%lld\niterations=%d\nmean_ms=%.6f\np50_ms=%.6f\np95_ms=%.6f\nfps=%.6f\n"
                "stage.backbone_ms=%.6f\nstage.fusion_ms=%.6f\nstage.neck_head_ms=%.6f\nstage.decode_ms=%.6f\n",
                static_cast<long long>(r.image_size), r.iterations, r.mean_ms, r.p50_ms, r.p95_ms, r.fps,
                r.stage_ms.backbone_ms, r.stage_ms.fusion_ms, r.stage_ms.neck_head_ms, r.stage_ms.decode_ms);
  return buf;
}

}  // namespace remotedet
