#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "remotedet/data.hpp"
#include "remotedet/detector.hpp"
#include "remotedet/losses.hpp"
#include "remotedet/metrics.hpp"

namespace remotedet {

/// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int step, const std::string& what)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + what),
        epoch(epoch),
        step(step) {}
  int epoch;
  int step;
};

std::string_view gt_form_name(GtForm form);
GtForm parse_gt_form(std::string_view name);

struct TrainConfig {
  double lr_init = 1e-2;
  double lr_final = 2e-3;
  int epochs = 10;
  int batch = 8;
  std::uint64_t seed = 0;
  GtForm gt_form = GtForm::Fusion;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double grad_clip = 10.0;  // max global gradient norm per step; 0 disables
  bool augment = true;
  DetectorConfig model;
  LossWeights loss_weights;
  double label_smoothing = 0.0;
  double eval_conf = 0.001;
  double eval_iou = kDefaultNmsThreshold;

  void validate() const;
};

/// Learning rate for a zero-based epoch: linear from lr_init to lr_final over the run.
double learning_rate(const TrainConfig& cfg, int epoch);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double box = 0, obj = 0, cls = 0, total = 0;  // means over training samples
  double val_map50 = 0, val_map50_95 = 0;
  double seconds = 0;
};

struct TrainResult {
  Detector best;  // highest validation mAP50, earliest epoch on ties
  Detector last;
  int best_epoch = 0;
  double best_map50 = 0;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD with momentum on the summed detection loss, one sample at a time in a fixed order
/// per epoch (shuffled by the seed), so a run is reproducible bit for bit.
TrainResult train(const TrainConfig& cfg, const std::vector<SamplePair>& train_set, const std::vector<SamplePair>& val_set,
                  const EpochCallback& on_epoch = {});

/// Mean loss components of a model over a dataset (no augmentation).
LossResult dataset_loss(const Detector& net, const std::vector<SamplePair>& data, GtForm form, const LossConfig& loss);

struct EvalReport {
  MapReport map;
  std::size_t images = 0;
  std::size_t detections = 0;
  std::size_t ground_truths = 0;
};

EvalReport evaluate(const Detector& net, const std::vector<SamplePair>& data, GtForm form, double conf_threshold = 0.001,
                    double iou_threshold = kDefaultNmsThreshold);
std::string format_report_table(const EvalReport& report, const std::vector<std::string>& class_names);
std::string format_report_kv(const EvalReport& report, const std::vector<std::string>& class_names);

struct BenchReport {
  int iterations = 0;
  std::int64_t image_size = 0;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, fps = 0;
  StageTimes stage_ms;  // mean per iteration
  std::vector<double> latencies_ms;
};

/// Single-image forward + decode timing after `warmup` untimed runs.
BenchReport bench(const Detector& net, std::int64_t image_size, int iterations, int warmup = 3, std::uint64_t seed = 0);
std::string format_bench(const BenchReport& report);

}  // namespace remotedet
