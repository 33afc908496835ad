#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "remotedet/data.hpp"
#include "remotedet/io.hpp"
#include "remotedet/settings.hpp"

using namespace remotedet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("remotedet_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_sample(const SamplePair& a, const SamplePair& b) {
  return a.id == b.id && a.rgb == b.rgb && a.tir == b.tir && a.rgb_gts == b.rgb_gts && a.tir_gts == b.tir_gts;
}

bool pixels_in_unit_range(const Tensor& t) {
  for (double v : t.values())
    if (!(v >= 0.0 && v <= 1.0)) return false;
  return true;
}

}  // namespace

TEST_CASE("generated datasets are reproducible from the seed") {
  DatasetSpec spec;
  const auto a = generate_dataset(12, 77, spec);
  const auto b = generate_dataset(12, 77, spec);
  const auto c = generate_dataset(12, 78, spec);
  REQUIRE(a.size() == 12);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same_sample(a[i], b[i]));
    any_diff = any_diff || !same_sample(a[i], c[i]);
  }
  CHECK(any_diff);
}

TEST_CASE("generated samples respect the sample contract") {
  DatasetSpec spec;
  for (const auto& s : generate_dataset(40, 3, spec)) {
    REQUIRE(s.rgb.shape() == Shape{3, 64, 64});
    REQUIRE(s.tir.shape() == s.rgb.shape());
    CHECK(pixels_in_unit_range(s.rgb));
    CHECK(pixels_in_unit_range(s.tir));
    CHECK(s.rgb_gts.size() + s.tir_gts.size() >= 1);
    for (const auto* list : {&s.rgb_gts, &s.tir_gts})
      for (const auto& g : *list) {
        CHECK(g.class_id >= 0);
        CHECK(g.class_id < spec.num_classes);
        CHECK(g.box.w > 0);
        CHECK(g.box.h > 0);
        CHECK(g.box.x1() >= 0);
        CHECK(g.box.x2() <= 64);
      }
  }
}

TEST_CASE("zero exclusivity gives matching modal annotation counts") {
  DatasetSpec spec;
  spec.exclusivity = 0.0;
  for (const auto& s : generate_dataset(50, 5, spec)) {
    CHECK(s.rgb_gts.size() == s.tir_gts.size());
    CHECK(count_exclusive(s) == 0);
  }
}

TEST_CASE("exclusivity 0.5 over 1000 samples stays within 0.05") {
  DatasetSpec spec;
  spec.exclusivity = 0.5;
  std::int64_t exclusive = 0, objects = 0;
  for (const auto& s : generate_dataset(1000, 11, spec)) {
    const std::int64_t e = count_exclusive(s);
    const auto both = static_cast<std::int64_t>(s.rgb_gts.size() + s.tir_gts.size()) - e;
    REQUIRE(both % 2 == 0);
    exclusive += e;
    objects += e + both / 2;
  }
  const double fraction = static_cast<double>(exclusive) / static_cast<double>(objects);
  CHECK(fraction > 0.45);
  CHECK(fraction < 0.55);
}

TEST_CASE("modal boxes of the same object differ by at most the jitter") {
  DatasetSpec spec;
  spec.exclusivity = 0.0;
  for (const auto& s : generate_dataset(30, 9, spec)) {
    REQUIRE(s.rgb_gts.size() == s.tir_gts.size());
    for (std::size_t i = 0; i < s.rgb_gts.size(); ++i) {
      const Box& a = s.rgb_gts[i].box;
      const Box& b = s.tir_gts[i].box;
      CHECK(s.rgb_gts[i].class_id == s.tir_gts[i].class_id);
      CHECK(std::abs(a.x1() - b.x1()) <= 2.0);
      CHECK(std::abs(a.y2() - b.y2()) <= 2.0);
    }
  }
}

TEST_CASE("augmentation flips boxes with the images") {
  DatasetSpec spec;
  spec.exclusivity = 0.0;
  const SamplePair original = generate_sample(spec, 1, 0);
  bool saw_flip = false;
  for (std::uint64_t seed = 0; seed < 16 && !saw_flip; ++seed) {
    SamplePair s = original;
    Rng rng(seed);
    augment(s, rng);
    CHECK(pixels_in_unit_range(s.rgb));
    if (s.tir == original.tir) continue;
    saw_flip = true;
    for (std::size_t i = 0; i < s.tir_gts.size(); ++i) {
      CHECK(s.tir_gts[i].box.cx == doctest::Approx(64.0 - original.tir_gts[i].box.cx));
      CHECK(s.tir_gts[i].box.w == doctest::Approx(original.tir_gts[i].box.w));
    }
    CHECK(s.tir.at(0, 5, 0) == original.tir.at(0, 5, 63));
  }
  CHECK(saw_flip);
}

TEST_CASE("polygon annotation becomes its axis-aligned envelope") {
  const auto gts = parse_annotations("0 0 4 0 4 2 0 2 car 0\n", Modality::TIR, default_class_names());
  REQUIRE(gts.size() == 1);
  CHECK(gts[0].box == Box{2, 1, 4, 2});
  CHECK(gts[0].class_id == 0);
  CHECK(gts[0].modality == Modality::TIR);
  REQUIRE(gts[0].polygon.has_value());
}

TEST_CASE("annotation text round trips") {
  DatasetSpec spec;
  const auto sample = generate_sample(spec, 21, 4);
  const auto& vocab = default_class_names();
  const std::string text = format_annotations(sample.rgb_gts, vocab);
  CHECK(parse_annotations(text, Modality::RGB, vocab) == sample.rgb_gts);

  const std::string rotated = "1 0 3 1 2 3 0 2 bus 1\n# comment\n\n";
  const auto parsed = parse_annotations(rotated, Modality::RGB, vocab);
  CHECK(parse_annotations(format_annotations(parsed, vocab), Modality::RGB, vocab) == parsed);
}

TEST_CASE("annotation errors name the line") {
  const auto& vocab = default_class_names();
  const std::string bad = "0 0 4 0 4 2 0 2 car 0\n0 0 4 0 4 2 car 0\n";
  try {
    parse_annotations(bad, Modality::RGB, vocab, "a.txt");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("a.txt:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_annotations("0 0 4 0 4 q 0 2 car 0\n", Modality::RGB, vocab), ParseError);
  try {
    parse_annotations("\n0 0 4 0 4 2 0 2 boat 0\n", Modality::RGB, vocab, "b.txt");
    FAIL("expected a vocabulary error");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("b.txt:2") != std::string::npos);
    CHECK(std::string(e.what()).find("boat") != std::string::npos);
  }
}

TEST_CASE("PNG round trip is exact for 8-bit values") {
  const fs::path dir = scratch_dir("png");
  Tensor image({3, 5, 7});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<double>((i * 37) % 256) / 255.0;
  save_png(dir / "x.png", image);
  CHECK(load_png(dir / "x.png") == image);
  CHECK_THROWS_AS(load_png(dir / "missing.png"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("dataset directories round trip") {
  const fs::path dir = scratch_dir("dataset");
  DatasetSpec spec;
  const auto samples = generate_dataset(4, 2, spec);
  write_dataset(dir, samples);
  const auto loaded = read_dataset(dir, default_class_names());
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].rgb_gts == samples[i].rgb_gts);
    CHECK(loaded[i].tir_gts == samples[i].tir_gts);
    for (std::size_t k = 0; k < samples[i].rgb.size(); ++k) {
      REQUIRE(std::abs(loaded[i].rgb[k] - samples[i].rgb[k]) <= 0.5 / 255.0 + 1e-12);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bitwise") {
  DetectorConfig cfg;
  cfg.width = 0.25;
  Rng rng(4);
  Detector net = Detector::create(cfg, rng);
  const std::string bytes = serialize_checkpoint(net);
  Detector back = deserialize_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.config.width == cfg.width);

  std::vector<Tensor> a, b;
  net.for_each_param("", [&](const std::string&, Tensor& t) { a.push_back(t); });
  back.for_each_param("", [&](const std::string&, Tensor& t) { b.push_back(t); });
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  const fs::path dir = scratch_dir("ckpt");
  write_checkpoint(dir / "m.ckpt", net);
  Detector from_file = read_checkpoint(dir / "m.ckpt");
  CHECK(serialize_checkpoint(from_file) == bytes);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint mismatches raise version errors") {
  DetectorConfig cfg;
  cfg.width = 0.25;
  Detector net = Detector::zeros(cfg);
  const std::string bytes = serialize_checkpoint(net);

  std::string wrong_version = bytes;
  wrong_version[4] = 7;
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_version), VersionError);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_magic), VersionError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), VersionError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), VersionError);
  CHECK_THROWS_AS(read_checkpoint("/nonexistent/model.ckpt"), VersionError);
}

TEST_CASE("key-value configuration parsing") {
  const auto kv = KeyValueConfig::parse("# run\nseed = 3\nlr=0.02\n  fusion = add  \naugment = false\n");
  CHECK(kv.get_int("seed", 0) == 3);
  CHECK(kv.get_double("lr", 0) == 0.02);
  CHECK(kv.get("fusion", "") == "add");
  CHECK_FALSE(kv.get_bool("augment", true));
  CHECK(kv.get("missing", "dflt") == "dflt");
  CHECK(KeyValueConfig::parse(kv.to_string()).values() == kv.values());
  CHECK_THROWS_AS(KeyValueConfig::parse("seed 3\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("seed = x\n").get_int("seed", 0), ConfigError);
}

TEST_CASE("run settings reject unknown keys and invalid values") {
  const auto s = settings_from(KeyValueConfig::parse("fusion = bid\nepochs = 2\nlr = 0.02\nlr_final = 0.01\n"));
  CHECK(s.train.model.fusion == FusionMode::Bid);
  CHECK(s.train.epochs == 2);
  CHECK(s.train.lr_init == 0.02);
  CHECK(s.train.lr_final == 0.01);
  CHECK(settings_from(effective_config(s)).train.lr_final == 0.01);
  CHECK_THROWS_AS(settings_from(KeyValueConfig::parse("colour = red\n")), ConfigError);
  CHECK_THROWS_AS(settings_from(KeyValueConfig::parse("fusion = sum\n")), ConfigError);
  CHECK_THROWS_AS(settings_from(KeyValueConfig::parse("lr = 0.001\nlr_final = 0.01\n")), ConfigError);
}

TEST_CASE("detector configuration text round trips") {
  DetectorConfig cfg;
  cfg.width = 0.5;
  cfg.fusion = FusionMode::Bid;
  cfg.single_modality = Modality::RGB;
  cfg.num_classes = 5;
  const DetectorConfig back = detector_config_from(KeyValueConfig::parse(detector_config_text(cfg)));
  CHECK(back.width == cfg.width);
  CHECK(back.fusion == cfg.fusion);
  CHECK(back.single_modality == cfg.single_modality);
  CHECK(back.num_classes == cfg.num_classes);
  CHECK(back.state_size == cfg.state_size);
}
