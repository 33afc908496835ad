#pragma once

#include <cstdint>
#include <string>

#include "remotedet/data.hpp"
#include "remotedet/io.hpp"
#include "remotedet/train.hpp"

namespace remotedet {

/// Everything a CLI run needs, resolved from a flat key/value configuration.
struct RunSettings {
  TrainConfig train;
  DatasetSpec data;
  std::int64_t train_size = 512;
  std::int64_t val_size = 128;
  std::string data_dir;  // read samples from disk instead of generating them
  std::string val_dir;
  double conf = kDefaultConfThreshold;  // detect subcommand
  int iterations = 50;                  // bench subcommand
  int warmup = 3;
};

/// Index offset of generated validation samples, so they never coincide with training samples.
inline constexpr std::int64_t kValidationIndexBase = 1'000'000;

/// Throws ConfigError for unknown keys or invalid values.
RunSettings settings_from(const KeyValueConfig& kv);
/// Every key with its effective value.
KeyValueConfig effective_config(const RunSettings& s);

/// Training and validation samples: read from data_dir/val_dir when set, otherwise generated from the seed.
std::vector<SamplePair> load_train_set(const RunSettings& s);
std::vector<SamplePair> load_val_set(const RunSettings& s);

}  // namespace remotedet
