#include "remotedet/detector.hpp"

#include <cmath>

#include "remotedet/ops.hpp"

namespace remotedet {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

constexpr std::array<std::int64_t, 6> kBaseChannels = {16, 32, 64, 128, 256, 256};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

std::string_view fusion_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::None: return "none";
    case FusionMode::Add: return "add";
    case FusionMode::Bid: return "bid";
    case FusionMode::Cfm: return "cfm";
  }
  return "?";
}

FusionMode parse_fusion(std::string_view name) {
  for (auto m : {FusionMode::None, FusionMode::Add, FusionMode::Bid, FusionMode::Cfm})
    if (fusion_name(m) == name) return m;
  throw ValidationError("unknown fusion mode '" + std::string(name) + "' (expected none, add, bid or cfm)");
}

std::array<std::int64_t, 6> DetectorConfig::channels() const {
  std::array<std::int64_t, 6> out{};
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max<std::int64_t>(2, std::llround(static_cast<double>(kBaseChannels[i]) * width));
  }
  return out;
}

HeadLayout DetectorConfig::layout() const {
  HeadLayout l;
  l.num_classes = num_classes;
  return l;
}

void DetectorConfig::validate() const {
  if (num_classes < 1) throw ValidationError("detector: num_classes must be at least 1");
  if (!(width > 0) || !std::isfinite(width)) throw ValidationError("detector: width multiplier must be positive");
  if (state_size < 1 || cfm_expand < 1) throw ValidationError("detector: invalid CFM geometry");
}

Backbone Backbone::create(const DetectorConfig& config, Rng* rng) {
  const auto ch = config.channels();
  Backbone b;
  b.stem = ConvUnit::create(3, ch[0], 3, 2, true, rng);
  for (int i = 0; i < 4; ++i) {
    b.c3[i] = C3Block::create(ch[i], ch[i], rng);
    b.down[i] = ConvUnit::create(ch[i], ch[i + 1], 3, 2, true, rng);
  }
  b.sppf = SppfBlock::create(ch[4], ch[5], rng);
  return b;
}

void Backbone::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  stem.for_each_param(prefix + "stem.", f);
  for (int i = 0; i < 4; ++i) {
    c3[i].for_each_param(prefix + "stage" + std::to_string(i + 1) + ".c3.", f);
    down[i].for_each_param(prefix + "stage" + std::to_string(i + 1) + ".down.", f);
  }
  sppf.for_each_param(prefix + "stage5.sppf.", f);
}

std::vector<Tensor> backbone_forward(const Backbone& net, const Tensor& image, BackboneCache* cache) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("backbone: expected a [3,H,W] image, got " + shape_to_string(image.shape()));
  }
  if (image.dim(1) % kInputMultiple != 0 || image.dim(2) % kInputMultiple != 0) {
    throw ValidationError("backbone: image size " + std::to_string(image.dim(1)) + "x" + std::to_string(image.dim(2)) +
                          " must be a multiple of " + std::to_string(kInputMultiple));
  }
  BackboneCache local;
  BackboneCache& c = cache ? *cache : local;
  std::vector<Tensor> stages;
  stages.push_back(forward(net.stem, image, cache ? &c.stem : nullptr));
  for (int i = 0; i < 4; ++i) {
    const Tensor mixed = forward(net.c3[i], stages.back(), cache ? &c.c3[i] : nullptr);
    stages.push_back(forward(net.down[i], mixed, cache ? &c.down[i] : nullptr));
  }
  stages.push_back(forward(net.sppf, stages.back(), cache ? &c.sppf : nullptr));
  return stages;
}

Tensor backbone_backward(const Backbone& net, const BackboneCache& c, const std::vector<Tensor>& stage_grads,
                         Backbone& grads) {
  auto grad_of = [&](int s) -> const Tensor* {
    return s < static_cast<int>(stage_grads.size()) && stage_grads[s].size() > 0 ? &stage_grads[s] : nullptr;
  };
  if (!grad_of(5)) throw ValidationError("backbone_backward: missing gradient for the last stage");
  Tensor g = backward(net.sppf, c.sppf, *grad_of(5), grads.sppf);
  for (int i = 3; i >= 0; --i) {
    if (const Tensor* extra = grad_of(i + 1)) g += *extra;
    g = backward(net.c3[i], c.c3[i], backward(net.down[i], c.down[i], g, grads.down[i]), grads.c3[i]);
  }
  if (const Tensor* extra = grad_of(0)) g += *extra;
  return backward(net.stem, c.stem, g, grads.stem);
}

NeckHead NeckHead::create(const DetectorConfig& config, Rng* rng) {
  const auto ch = config.channels();
  const std::int64_t c2 = ch[2], c3 = ch[3], c5 = ch[5];
  const std::int64_t out = config.layout().channels();
  NeckHead n;
  n.merge3 = ConvUnit::create(c5 + c3, c3, 1, 1, true, rng);
  n.merge2 = ConvUnit::create(c3 + c2, c2, 1, 1, true, rng);
  const std::array<std::int64_t, 3> level_ch = {c2, c3, c5};
  const HeadLayout layout = config.layout();
  for (int l = 0; l < 3; ++l) {
    n.head_conv[l] = ConvUnit::create(level_ch[l], level_ch[l], 3, 1, true, rng);
    n.head_out[l] = ConvUnit::create(level_ch[l], out, 1, 1, false, rng);
    if (rng) {
      // Objectness prior of about four objects per 64x64 image; class prior 0.6 spread over K.
      const double cells = std::pow(64.0 / layout.strides[l], 2);
      for (int a = 0; a < layout.anchors(); ++a) {
        n.head_out[l].bias[a * layout.fields() + 4] = std::log(4.0 / cells);
        for (int k = 0; k < layout.num_classes; ++k) {
          n.head_out[l].bias[a * layout.fields() + 5 + k] = std::log(0.6 / (layout.num_classes - 0.99));
        }
      }
    }
  }
  return n;
}

void NeckHead::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  merge3.for_each_param(prefix + "merge3.", f);
  merge2.for_each_param(prefix + "merge2.", f);
  for (int l = 0; l < 3; ++l) {
    head_conv[l].for_each_param(prefix + "head" + std::to_string(l) + ".conv.", f);
    head_out[l].for_each_param(prefix + "head" + std::to_string(l) + ".out.", f);
  }
}

std::vector<Tensor> neck_head_forward(const NeckHead& net, const std::vector<Tensor>& pyramid, NeckHeadCache* cache) {
  if (pyramid.size() != 3) throw DimensionError("neck: expected three pyramid levels");
  NeckHeadCache local;
  NeckHeadCache& c = cache ? *cache : local;
  const Tensor& p2 = pyramid[0];
  const Tensor& p3 = pyramid[1];
  const Tensor& p5 = pyramid[2];
  c.channels = {p2.dim(0), p3.dim(0), p5.dim(0)};
  const Tensor up5 = upsample_nearest2x(p5);
  check_same_shape(Tensor({up5.dim(1), up5.dim(2)}), Tensor({p3.dim(1), p3.dim(2)}), "neck: level 3 grid");
  const Tensor n3 = forward(net.merge3, concat_channels({&up5, &p3}), &c.merge3);
  const Tensor up3 = upsample_nearest2x(n3);
  check_same_shape(Tensor({up3.dim(1), up3.dim(2)}), Tensor({p2.dim(1), p2.dim(2)}), "neck: level 2 grid");
  const Tensor n2 = forward(net.merge2, concat_channels({&up3, &p2}), &c.merge2);
  const std::array<const Tensor*, 3> levels = {&n2, &n3, &p5};
  std::vector<Tensor> raw;
  for (int l = 0; l < 3; ++l) {
    raw.push_back(forward(net.head_out[l], forward(net.head_conv[l], *levels[l], &c.head_conv[l]), &c.head_out[l]));
  }
  return raw;
}

std::vector<Tensor> neck_head_backward(const NeckHead& net, const NeckHeadCache& c, const std::vector<Tensor>& grad_raw,
                                       NeckHead& grads) {
  std::array<Tensor, 3> g_level;
  for (int l = 0; l < 3; ++l) {
    g_level[l] = backward(net.head_conv[l], c.head_conv[l],
                          backward(net.head_out[l], c.head_out[l], grad_raw[l], grads.head_out[l]), grads.head_conv[l]);
  }
  const std::int64_t c2 = c.channels[0], c3 = c.channels[1], c5 = c.channels[2];
  auto parts2 = split_channels(backward(net.merge2, c.merge2, g_level[0], grads.merge2), {c3, c2});
  Tensor g_n3 = g_level[1];
  g_n3 += upsample_nearest2x_backward(parts2[0]);
  auto parts3 = split_channels(backward(net.merge3, c.merge3, g_n3, grads.merge3), {c5, c3});
  Tensor g_p5 = g_level[2];
  g_p5 += upsample_nearest2x_backward(parts3[0]);
  return {std::move(parts2[1]), std::move(parts3[1]), std::move(g_p5)};
}

namespace {

CfmConfig cfm_config(const DetectorConfig& config, std::int64_t channels) {
  CfmConfig c;
  c.channels = channels;
  c.expand = config.cfm_expand;
  c.state_size = config.state_size;
  return c;
}

bool uses_cfm(FusionMode m) { return m == FusionMode::Bid || m == FusionMode::Cfm; }

}  // namespace

Detector Detector::create(const DetectorConfig& config, Rng& rng) {
  config.validate();
  Detector d;
  d.config = config;
  d.rgb = Backbone::create(config, &rng);
  d.tir = Backbone::create(config, &rng);
  const auto ch = config.channels();
  for (int i = 0; i < 3; ++i) d.cfm[i] = CfmWeights::initialized(cfm_config(config, ch[kPyramidStages[i]]), rng);
  d.neck = NeckHead::create(config, &rng);
  return d;
}

Detector Detector::zeros(const DetectorConfig& config) {
  config.validate();
  Detector d;
  d.config = config;
  d.rgb = Backbone::create(config, nullptr);
  d.tir = Backbone::create(config, nullptr);
  const auto ch = config.channels();
  for (int i = 0; i < 3; ++i) d.cfm[i] = CfmWeights::zeros(cfm_config(config, ch[kPyramidStages[i]]));
  d.neck = NeckHead::create(config, nullptr);
  return d;
}

void Detector::for_each_param(const std::string& prefix, const ParamVisitor& f) {
  const FusionMode mode = config.fusion;
  if (mode != FusionMode::None || config.single_modality == Modality::RGB) rgb.for_each_param(prefix + "rgb.", f);
  if (mode != FusionMode::None || config.single_modality == Modality::TIR) tir.for_each_param(prefix + "tir.", f);
  if (uses_cfm(mode)) {
    for (int i = 0; i < 3; ++i) cfm[i].for_each_param(prefix + "cfm" + std::to_string(kPyramidStages[i]) + ".", f);
  }
  neck.for_each_param(prefix + "neck.", f);
}

std::vector<Tensor> fuse_pyramid(const std::vector<Tensor>& rgb_stages, const std::vector<Tensor>& tir_stages,
                                 const Detector& net, FusionCache* cache) {
  const FusionMode mode = net.config.fusion;
  std::vector<Tensor> out;
  if (mode == FusionMode::None) {
    const auto& stages = net.config.single_modality == Modality::RGB ? rgb_stages : tir_stages;
    for (int s : kPyramidStages) out.push_back(stages.at(s));
    return out;
  }
  for (int i = 0; i < 3; ++i) {
    const Tensor& a = rgb_stages.at(kPyramidStages[i]);
    const Tensor& b = tir_stages.at(kPyramidStages[i]);
    check_same_shape(a, b, "fuse_pyramid");
    if (mode == FusionMode::Add) {
      out.push_back(a + b);
    } else {
      CfmOptions opt;
      opt.directions = mode == FusionMode::Bid ? 2 : 4;
      CfmOutput fused = cfm_forward(a, b, net.cfm[i], opt, cache ? &cache->cfm[i] : nullptr);
      fused.rgb += fused.tir;
      out.push_back(std::move(fused.rgb));
    }
  }
  return out;
}

std::vector<Tensor> detector_forward(const Detector& net, const Tensor& rgb, const Tensor& tir, DetectorCache* cache,
                                     StageTimes* times) {
  const FusionMode mode = net.config.fusion;
  auto t0 = Clock::now();
  std::vector<Tensor> rgb_stages, tir_stages;
  if (mode != FusionMode::None || net.config.single_modality == Modality::RGB) {
    rgb_stages = backbone_forward(net.rgb, rgb, cache ? &cache->rgb : nullptr);
  }
  if (mode != FusionMode::None || net.config.single_modality == Modality::TIR) {
    tir_stages = backbone_forward(net.tir, tir, cache ? &cache->tir : nullptr);
  }
  if (times) times->backbone_ms += elapsed_ms(t0);
  t0 = Clock::now();
  const auto pyramid = fuse_pyramid(rgb_stages, tir_stages, net, cache ? &cache->fusion : nullptr);
  if (times) times->fusion_ms += elapsed_ms(t0);
  t0 = Clock::now();
  auto raw = neck_head_forward(net.neck, pyramid, cache ? &cache->neck : nullptr);
  if (times) times->neck_head_ms += elapsed_ms(t0);
  return raw;
}

void detector_backward(const Detector& net, const DetectorCache& cache, const std::vector<Tensor>& grad_raw,
                       Detector& grads) {
  const FusionMode mode = net.config.fusion;
  const auto g_pyr = neck_head_backward(net.neck, cache.neck, grad_raw, grads.neck);
  std::vector<Tensor> g_rgb(kStageCount), g_tir(kStageCount);
  for (int i = 0; i < 3; ++i) {
    const int s = kPyramidStages[i];
    if (mode == FusionMode::None || mode == FusionMode::Add) {
      g_rgb[s] = g_pyr[i];
      g_tir[s] = g_pyr[i];
    } else {
      CfmGrads cg = cfm_backward(cache.fusion.cfm[i], net.cfm[i], g_pyr[i], g_pyr[i]);
      accumulate_params(grads.cfm[i], cg.weights);
      g_rgb[s] = std::move(cg.f1);
      g_tir[s] = std::move(cg.f2);
    }
  }
  if (mode != FusionMode::None || net.config.single_modality == Modality::RGB) {
    backbone_backward(net.rgb, cache.rgb, g_rgb, grads.rgb);
  }
  if (mode != FusionMode::None || net.config.single_modality == Modality::TIR) {
    backbone_backward(net.tir, cache.tir, g_tir, grads.tir);
  }
}

std::vector<Detection> detect(const Detector& net, const Tensor& rgb, const Tensor& tir, double conf_threshold,
                              double iou_threshold, StageTimes* times) {
  const auto raw = detector_forward(net, rgb, tir, nullptr, times);
  const auto t0 = Clock::now();
  auto dets = decode_predictions(raw, net.config.layout(), conf_threshold, iou_threshold);
  if (times) times->decode_ms += elapsed_ms(t0);
  return dets;
}

}  // namespace remotedet
