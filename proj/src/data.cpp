#include "remotedet/data.hpp"

#include <algorithm>
#include <cmath>

#include "remotedet/metrics.hpp"

namespace remotedet {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the pair
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E8E5ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct Rect {
  int x1, y1, x2, y2;  // half-open pixel range
  Box box() const { return Box::from_corners(x1, y1, x2, y2); }
};

void fill_rect(Tensor& img, const Rect& r, const std::array<double, 3>& color, double noise, Rng& rng) {
  const auto h = img.dim(1), w = img.dim(2);
  for (int y = std::max(0, r.y1); y < std::min<int>(static_cast<int>(h), r.y2); ++y)
    for (int x = std::max(0, r.x1); x < std::min<int>(static_cast<int>(w), r.x2); ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(color[c] + noise * rng.normal(), 0.0, 1.0);
}

GroundTruth make_gt(const Rect& r, int cls, Modality m) {
  GroundTruth g;
  g.box = r.box();
  g.class_id = cls;
  g.modality = m;
  g.polygon = corners(g.box);
  return g;
}

}  // namespace

const std::vector<std::string>& default_class_names() {
  static const std::vector<std::string> names = {"car", "truck", "bus", "van", "freight_car"};
  return names;
}

void DatasetSpec::validate() const {
  if (image_size < 32 || image_size % 32 != 0) throw ValidationError("dataset: image size must be a positive multiple of 32");
  if (num_classes != 3) throw ValidationError("dataset: the synthetic generator renders exactly 3 classes");
  if (min_objects < 0 || max_objects < min_objects) throw ValidationError("dataset: invalid object count range");
  if (min_side < 2 || max_side < min_side || max_side > image_size) throw ValidationError("dataset: invalid object size range");
  if (!(exclusivity >= 0 && exclusivity <= 1)) throw ValidationError("dataset: exclusivity must be in [0,1]");
  if (!(low_light >= 0 && low_light <= 1)) throw ValidationError("dataset: low_light must be in [0,1]");
  if (jitter < 0 || 2 * jitter >= min_side) throw ValidationError("dataset: jitter too large for the object size");
}

SamplePair generate_sample(const DatasetSpec& spec, std::uint64_t seed, std::int64_t index) {
  spec.validate();
  Rng rng(mix(seed, static_cast<std::uint64_t>(index)));
  const auto s = spec.image_size;
  SamplePair out;
  out.id = "s" + std::to_string(index);
  out.rgb = Tensor({3, s, s});
  out.tir = Tensor({3, s, s});

  // Backgrounds: textured ground in the visible image, cool noise in the thermal one.
  const std::array<double, 3> ground = {rng.uniform(0.3, 0.6), rng.uniform(0.3, 0.6), rng.uniform(0.25, 0.5)};
  const double tir_base = rng.uniform(0.1, 0.3);
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) out.rgb.at(c, y, x) = std::clamp(ground[c] + spec.noise * rng.normal(), 0.0, 1.0);
      const double t = std::clamp(tir_base + spec.noise * rng.normal(), 0.0, 1.0);
      for (int c = 0; c < 3; ++c) out.tir.at(c, y, x) = t;
    }

  const int count = static_cast<int>(rng.integer(spec.min_objects, spec.max_objects));
  std::vector<Rect> placed;
  for (int i = 0; i < count; ++i) {
    Rect r{};
    bool ok = false;
    for (int attempt = 0; attempt < 30 && !ok; ++attempt) {
      const int w = static_cast<int>(rng.integer(spec.min_side, spec.max_side));
      const int h = static_cast<int>(rng.integer(spec.min_side, spec.max_side));
      const int x = static_cast<int>(rng.integer(spec.jitter, s - w - spec.jitter));
      const int y = static_cast<int>(rng.integer(spec.jitter, s - h - spec.jitter));
      r = Rect{x, y, x + w, y + h};
      ok = std::none_of(placed.begin(), placed.end(), [&](const Rect& p) { return iou(p.box(), r.box()) > 0.05; });
    }
    if (!ok) continue;
    placed.push_back(r);

    const int cls = static_cast<int>(rng.integer(0, spec.num_classes - 1));
    bool in_rgb = true, in_tir = true;
    if (rng.bernoulli(spec.exclusivity)) (rng.bernoulli(0.5) ? in_tir : in_rgb) = false;

    // Thermal box jittered corner by corner relative to the visible one.
    Rect t{r.x1 + static_cast<int>(rng.integer(-spec.jitter, spec.jitter)),
           r.y1 + static_cast<int>(rng.integer(-spec.jitter, spec.jitter)),
           r.x2 + static_cast<int>(rng.integer(-spec.jitter, spec.jitter)),
           r.y2 + static_cast<int>(rng.integer(-spec.jitter, spec.jitter))};

    if (in_rgb) {
      const double shade = rng.uniform(0.8, 1.0);
      const std::array<double, 3> color = cls == 2 ? std::array<double, 3>{0.15 * shade, 0.3 * shade, 0.9 * shade}
                                                   : std::array<double, 3>{0.9 * shade, 0.2 * shade, 0.15 * shade};
      fill_rect(out.rgb, r, color, spec.noise, rng);
      out.rgb_gts.push_back(make_gt(r, cls, Modality::RGB));
    }
    if (in_tir) {
      const double heat = cls == 0 ? rng.uniform(0.85, 1.0) : rng.uniform(0.5, 0.65);
      fill_rect(out.tir, t, {heat, heat, heat}, spec.noise, rng);
      out.tir_gts.push_back(make_gt(t, cls, Modality::TIR));
    }
  }

  if (rng.bernoulli(spec.low_light)) {
    const double dim = rng.uniform(0.15, 0.35);
    for (double& v : out.rgb.storage()) v = std::clamp(v * dim + 0.02 * rng.normal(), 0.0, 1.0);
  }
  return out;
}

std::vector<SamplePair> generate_dataset(std::int64_t n, std::uint64_t seed, const DatasetSpec& spec,
                                         std::int64_t first_index) {
  if (n < 1) throw ValidationError("dataset: n must be at least 1");
  spec.validate();
  std::vector<SamplePair> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = generate_sample(spec, seed, first_index + i);
  return out;
}

void augment(SamplePair& sample, Rng& rng) {
  if (rng.bernoulli(0.5)) {
    const auto w = sample.rgb.dim(2);
    for (Tensor* img : {&sample.rgb, &sample.tir}) {
      Tensor flipped(img->shape());
      for (std::int64_t c = 0; c < img->dim(0); ++c)
        for (std::int64_t y = 0; y < img->dim(1); ++y)
          for (std::int64_t x = 0; x < w; ++x) flipped.at(c, y, x) = img->at(c, y, w - 1 - x);
      *img = std::move(flipped);
    }
    for (auto* list : {&sample.rgb_gts, &sample.tir_gts})
      for (auto& g : *list) {
        g.box.cx = static_cast<double>(w) - g.box.cx;
        if (g.polygon) {
          auto& p = *g.polygon;
          for (int k = 0; k < 8; k += 2) p[k] = static_cast<double>(w) - p[k];
        }
      }
  }
  const double brightness = rng.uniform(-0.1, 0.1), contrast = rng.uniform(0.8, 1.2);
  std::array<double, 3> gain{};
  for (double& g : gain) g = rng.uniform(0.9, 1.1);
  Tensor& img = sample.rgb;
  const auto plane = img.dim(1) * img.dim(2);
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < plane; ++i) {
      double& v = img[c * plane + i];
      v = std::clamp((v - 0.5) * contrast + 0.5 + brightness, 0.0, 1.0) * gain[c];
      v = std::clamp(v, 0.0, 1.0);
    }
}

std::int64_t count_exclusive(const SamplePair& sample) {
  const auto fused = prepare_gt(sample.rgb_gts, sample.tir_gts, GtForm::Fusion);
  const auto total = static_cast<std::int64_t>(sample.rgb_gts.size() + sample.tir_gts.size());
  const auto paired = total - static_cast<std::int64_t>(fused.size());
  return total - 2 * paired;
}

}  // namespace remotedet
