#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "remotedet/box.hpp"
#include "remotedet/params.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

/// Vehicle vocabulary for annotations; the synthetic generator uses the first num_classes names.
const std::vector<std::string>& default_class_names();

struct SamplePair {
  Tensor rgb;  // [3,H,W] in [0,1]
  Tensor tir;  // [3,H,W] in [0,1], gray replicated
  std::vector<GroundTruth> rgb_gts, tir_gts;
  std::string id;
};

struct DatasetSpec {
  std::int64_t image_size = 64;
  int num_classes = 3;
  int min_objects = 1, max_objects = 6;
  int min_side = 8, max_side = 20;
  double exclusivity = 0.5;       // fraction of objects rendered in one modality only
  double low_light = 0.3;         // probability that a visible image is dimmed
  int jitter = 1;                 // max per-corner offset between the two modal boxes
  double noise = 0.05;            // background noise amplitude

  void validate() const;
};

/// Objects carry class cues split across modalities: visible hue separates class 2 from {0, 1},
/// thermal intensity separates class 0 from {1, 2}. Deterministic in (spec, seed, index).
SamplePair generate_sample(const DatasetSpec& spec, std::uint64_t seed, std::int64_t index);
std::vector<SamplePair> generate_dataset(std::int64_t n, std::uint64_t seed, const DatasetSpec& spec,
                                         std::int64_t first_index = 0);

/// Random horizontal flip of both modalities and brightness/contrast/channel jitter on the visible image.
void augment(SamplePair& sample, Rng& rng);

/// Ground-truth objects present in exactly one modality, counted by pairing boxes of the same class.
std::int64_t count_exclusive(const SamplePair& sample);

}  // namespace remotedet
