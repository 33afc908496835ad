#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "remotedet/box.hpp"
#include "remotedet/data.hpp"
#include "remotedet/detector.hpp"
#include "remotedet/tensor.hpp"

namespace remotedet {

/// Malformed input files; the message carries the file and line.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Class name outside the annotation vocabulary.
class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint magic/version/layout mismatch.
class VersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or unknown configuration values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit PNG <-> [3,H,W] in [0,1]. Gray images are replicated across channels; alpha is dropped.
Tensor load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Tensor& image);

/// Copy of the image with detection outlines drawn in a per-class color.
Tensor draw_detections(const Tensor& image, const std::vector<Detection>& dets);

/// One object per line: "x1 y1 x2 y2 x3 y3 x4 y4 class difficulty". Blank lines and '#' comments are skipped.
std::vector<GroundTruth> parse_annotations(const std::string& text, Modality modality,
                                           const std::vector<std::string>& vocabulary,
                                           const std::string& source = "<string>");
std::string format_annotations(const std::vector<GroundTruth>& gts, const std::vector<std::string>& vocabulary);
std::vector<GroundTruth> read_annotations(const std::filesystem::path& path, Modality modality,
                                          const std::vector<std::string>& vocabulary);
void write_annotations(const std::filesystem::path& path, const std::vector<GroundTruth>& gts,
                       const std::vector<std::string>& vocabulary);

/// Dataset directory layout: <id>_rgb.png, <id>_tir.png, <id>_rgb.txt, <id>_tir.txt and an index file listing ids.
void write_dataset(const std::filesystem::path& dir, const std::vector<SamplePair>& samples);
std::vector<SamplePair> read_dataset(const std::filesystem::path& dir, const std::vector<std::string>& vocabulary);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian: "RDMB", u32 version, u32-length config text, u32 entry count, then per entry
/// u32-length name, u8 dtype (1 = f64), u32 rank, u64 dims, raw values.
void write_checkpoint(const std::filesystem::path& path, const Detector& net);
Detector read_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Detector& net);
Detector deserialize_checkpoint(const std::string& bytes);

/// Flat "key = value" configuration.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<string>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }
  std::string to_string() const;

 private:
  std::map<std::string, std::string> values_;
};

std::string detector_config_text(const DetectorConfig& config);
DetectorConfig detector_config_from(const KeyValueConfig& kv);

}  // namespace remotedet
