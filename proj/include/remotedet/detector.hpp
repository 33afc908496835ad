#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "remotedet/box.hpp"
#include "remotedet/cfm.hpp"
#include "remotedet/head.hpp"
#include "remotedet/layers.hpp"

namespace remotedet {

enum class FusionMode { None, Add, Bid, Cfm };

std::string_view fusion_name(FusionMode mode);
/// Parses none/add/bid/cfm; throws ValidationError otherwise.
FusionMode parse_fusion(std::string_view name);

struct DetectorConfig {
  int num_classes = 3;
  double width = 1.0;                 // multiplier on the 16..256 channel plan
  FusionMode fusion = FusionMode::Cfm;
  Modality single_modality = Modality::TIR;  // branch used when fusion is None
  std::int64_t state_size = kDefaultStateSize;
  std::int64_t cfm_expand = 2;

  /// Channels after stages 0..5.
  std::array<std::int64_t, 6> channels() const;
  HeadLayout layout() const;
  void validate() const;
};

inline constexpr int kStageCount = 6;
/// Backbone stages whose outputs feed the pyramid.
inline constexpr std::array<int, 3> kPyramidStages = {2, 3, 5};
inline constexpr std::int64_t kInputMultiple = 32;

/// Stem conv, four stages of C3 followed by a stride-2 conv, and SPPF.
struct Backbone {
  ConvUnit stem;
  std::array<C3Block, 4> c3;
  std::array<ConvUnit, 4> down;
  SppfBlock sppf;

  static Backbone create(const DetectorConfig& config, Rng* rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct BackboneCache {
  ConvUnitCache stem;
  std::array<C3Cache, 4> c3;
  std::array<ConvUnitCache, 4> down;
  SppfCache sppf;
};

/// Feature maps after stages 0..5. Throws ValidationError unless H and W are multiples of 32.
std::vector<Tensor> backbone_forward(const Backbone& net, const Tensor& image, BackboneCache* cache = nullptr);
/// Gradient w.r.t. the image given gradients for each stage output (empty tensors mean zero).
Tensor backbone_backward(const Backbone& net, const BackboneCache& cache, const std::vector<Tensor>& stage_grads,
                         Backbone& grads);

/// Top-down merge of the three pyramid levels followed by per-level heads.
struct NeckHead {
  ConvUnit merge3;  // [up(P5), P3] -> C3 channels
  ConvUnit merge2;  // [up(N3), P2] -> C2 channels
  std::array<ConvUnit, 3> head_conv;
  std::array<ConvUnit, 3> head_out;

  static NeckHead create(const DetectorConfig& config, Rng* rng);
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct NeckHeadCache {
  ConvUnitCache merge3, merge2;
  std::array<ConvUnitCache, 3> head_conv, head_out;
  std::array<std::int64_t, 3> channels{};
};

/// Raw predictions, finest level first.
std::vector<Tensor> neck_head_forward(const NeckHead& net, const std::vector<Tensor>& pyramid,
                                      NeckHeadCache* cache = nullptr);
std::vector<Tensor> neck_head_backward(const NeckHead& net, const NeckHeadCache& cache,
                                       const std::vector<Tensor>& grad_raw, NeckHead& grads);

struct Detector {
  DetectorConfig config;
  Backbone rgb, tir;
  std::array<CfmWeights, 3> cfm;  // one per pyramid level
  NeckHead neck;

  static Detector create(const DetectorConfig& config, Rng& rng);
  /// All weights zero.
  static Detector zeros(const DetectorConfig& config);
  /// Visits only the parameters the fusion mode uses.
  void for_each_param(const std::string& prefix, const ParamVisitor& f);
};

struct FusionCache {
  std::array<CfmCache, 3> cfm;
};

/// Combines the two branches' pyramid stages per the fusion mode.
std::vector<Tensor> fuse_pyramid(const std::vector<Tensor>& rgb_stages, const std::vector<Tensor>& tir_stages,
                                 const Detector& net, FusionCache* cache = nullptr);

struct StageTimes {
  double backbone_ms = 0, fusion_ms = 0, neck_head_ms = 0, decode_ms = 0;
};

struct DetectorCache {
  BackboneCache rgb, tir;
  FusionCache fusion;
  NeckHeadCache neck;
};

std::vector<Tensor> detector_forward(const Detector& net, const Tensor& rgb, const Tensor& tir,
                                     DetectorCache* cache = nullptr, StageTimes* times = nullptr);
/// Accumulates d(sum grad_raw * raw)/d params into grads.
void detector_backward(const Detector& net, const DetectorCache& cache, const std::vector<Tensor>& grad_raw,
                       Detector& grads);

/// Forward + decode + NMS.
std::vector<Detection> detect(const Detector& net, const Tensor& rgb, const Tensor& tir, double conf_threshold,
                              double iou_threshold, StageTimes* times = nullptr);

}  // namespace remotedet
