// remotedet command-line interface: generate, train, eval, bench, detect, selfcheck.
#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "remotedet/io.hpp"
#include "remotedet/selfcheck.hpp"
#include "remotedet/settings.hpp"

using namespace remotedet;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

// Flags that map onto configuration keys; given flags override the config file.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> bound;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    bound.emplace_back(cmd->add_option(flag, values[key], help), key);
  }
  KeyValueConfig apply(const std::string& config_path) const {
    KeyValueConfig kv = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    for (const auto& [opt, key] : bound)
      if (opt->count() > 0) kv.set(key, values.at(key));
    return kv;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << text;
}

void apply_thread_cap() {
  const char* env = std::getenv("REMOTEDET_THREADS");
  if (!env || !*env) return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("REMOTEDET_THREADS must be a positive integer, got '") + env + "'");
  omp_set_num_threads(static_cast<int>(n));
}

std::string epoch_line(const EpochLog& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "epoch=%d lr=%.6g box=%.6f obj=%.6f cls=%.6f total=%.6f val_map50=%.6f val_map50_95=%.6f seconds=%.2f",
                l.epoch, l.lr, l.box, l.obj, l.cls, l.total, l.val_map50, l.val_map50_95, l.seconds);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal (visible + thermal) small-object detector with state-space fusion"};
  app.require_subcommand(1);
  std::string config_path, out_dir, checkpoint, rgb_path, tir_path;
  Overrides ov;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Flat key = value configuration file");
    ov.add(cmd, "--seed", "seed", "Random seed for data, initialization and shuffling");
    ov.add(cmd, "--image-size", "image_size", "Image side length (multiple of 32)");
  };
  auto model_opts = [&](CLI::App* cmd) {
    ov.add(cmd, "--fusion", "fusion", "none | add | bid | cfm");
    ov.add(cmd, "--modality", "modality", "Branch used when --fusion none: rgb | tir");
    ov.add(cmd, "--width", "width", "Channel width multiplier");
  };
  auto data_opts = [&](CLI::App* cmd) {
    ov.add(cmd, "--gt-form", "gt_form", "rgb | tir | fusion");
    ov.add(cmd, "--data", "data", "Dataset directory (generated from the seed when omitted)");
    ov.add(cmd, "--val-data", "val_data", "Validation dataset directory");
    ov.add(cmd, "--val-size", "val_size", "Generated validation samples");
    ov.add(cmd, "--exclusivity", "exclusivity", "Fraction of single-modality objects in generated data");
  };

  auto* gen = app.add_subcommand("generate", "Write a synthetic paired dataset");
  common(gen);
  ov.add(gen, "--n", "train_size", "Number of samples");
  ov.add(gen, "--exclusivity", "exclusivity", "Fraction of single-modality objects");
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a detector");
  common(tr);
  model_opts(tr);
  data_opts(tr);
  ov.add(tr, "--epochs", "epochs", "Training epochs");
  ov.add(tr, "--lr", "lr", "Initial learning rate");
  ov.add(tr, "--batch", "batch", "Samples per SGD step");
  ov.add(tr, "--train-size", "train_size", "Generated training samples");
  tr->add_option("--out", out_dir, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  common(ev);
  data_opts(ev);
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--out", out_dir, "Directory for the report");

  auto* be = app.add_subcommand("bench", "Time single-image inference");
  common(be);
  model_opts(be);
  ov.add(be, "--iterations", "iterations", "Timed iterations (>= 10)");
  be->add_option("--checkpoint", checkpoint, "Checkpoint file (random weights when omitted)");
  be->add_option("--out", out_dir, "Directory for the report");

  auto* de = app.add_subcommand("detect", "Detect objects in one visible/thermal image pair");
  common(de);
  ov.add(de, "--conf", "conf", "Score threshold");
  de->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  de->add_option("--rgb", rgb_path, "Visible image (PNG)")->required();
  de->add_option("--tir", tir_path, "Thermal image (PNG)")->required();
  de->add_option("--out", out_dir, "Output directory")->required();

  auto* sc = app.add_subcommand("selfcheck", "Run the built-in consistency checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    apply_thread_cap();
    if (sc->parsed()) {
      const int failures = run_selfcheck(std::cout);
      std::cout << (failures == 0 ? "selfcheck: all checks passed\n" : "selfcheck: failures present\n");
      return failures == 0 ? kExitOk : kExitFailure;
    }

    const KeyValueConfig kv = ov.apply(config_path);
    const RunSettings s = settings_from(kv);
    const KeyValueConfig effective = effective_config(s);

    if (gen->parsed()) {
      const auto samples = generate_dataset(s.train_size, s.train.seed, s.data);
      write_dataset(out_dir, samples);
      write_text(fs::path(out_dir) / "config.txt", effective.to_string());
      std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
      return kExitOk;
    }

    if (tr->parsed()) {
      fs::create_directories(out_dir);
      write_text(fs::path(out_dir) / "config.txt", effective.to_string());
      const auto train_set = load_train_set(s);
      const auto val_set = load_val_set(s);
      std::ofstream log(fs::path(out_dir) / "train_log.txt");
      TrainResult r = train(s.train, train_set, val_set, [&](const EpochLog& l) {
        const std::string line = epoch_line(l);
        std::cout << line << "\n" << std::flush;
        log << line << "\n" << std::flush;
      });
      write_checkpoint(fs::path(out_dir) / "best.ckpt", r.best);
      write_checkpoint(fs::path(out_dir) / "last.ckpt", r.last);
      if (!val_set.empty()) {
        const EvalReport rep = evaluate(r.best, val_set, s.train.gt_form, s.train.eval_conf, s.train.eval_iou);
        write_text(fs::path(out_dir) / "metrics.txt",
                   "best_epoch=" + std::to_string(r.best_epoch) + "\n" + format_report_kv(rep, default_class_names()));
        std::cout << format_report_table(rep, default_class_names());
      }
      return kExitOk;
    }

    if (ev->parsed()) {
      const Detector net = read_checkpoint(checkpoint);
      const auto data = !s.data_dir.empty() ? read_dataset(s.data_dir, default_class_names()) : load_val_set(s);
      const EvalReport rep = evaluate(net, data, s.train.gt_form, s.train.eval_conf, s.train.eval_iou);
      std::cout << format_report_table(rep, default_class_names()) << format_report_kv(rep, default_class_names());
      if (!out_dir.empty()) {
        write_text(fs::path(out_dir) / "config.txt", effective.to_string());
        write_text(fs::path(out_dir) / "eval.txt", format_report_kv(rep, default_class_names()));
      }
      return kExitOk;
    }

    if (be->parsed()) {
      Detector net = checkpoint.empty() ? [&] {
        Rng rng(s.train.seed);
        return Detector::create(s.train.model, rng);
      }()
                                        : read_checkpoint(checkpoint);
      const BenchReport rep = bench(net, s.data.image_size, s.iterations, s.warmup, s.train.seed);
      const std::string text = "fusion=" + std::string(fusion_name(net.config.fusion)) + "\n" + format_bench(rep);
      std::cout << text;
      if (!out_dir.empty()) {
        write_text(fs::path(out_dir) / "config.txt", effective.to_string());
        write_text(fs::path(out_dir) / "bench.txt", text);
      }
      return kExitOk;
    }

    if (de->parsed()) {
      const Detector net = read_checkpoint(checkpoint);
      const Tensor rgb = load_png(rgb_path), tir = load_png(tir_path);
      if (rgb.shape() != tir.shape()) throw ParseError("visible and thermal images differ in size");
      const auto dets = detect(net, rgb, tir, s.conf, s.train.eval_iou);
      fs::create_directories(out_dir);
      save_png(fs::path(out_dir) / "rgb_detections.png", draw_detections(rgb, dets));
      save_png(fs::path(out_dir) / "tir_detections.png", draw_detections(tir, dets));
      std::string lines;
      char buf[256];
      for (const auto& d : dets) {
        const Polygon p = corners(d.box);
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %s %.6f\n", p[0], p[1], p[2], p[3],
                      p[4], p[5], p[6], p[7], default_class_names()[static_cast<std::size_t>(d.class_id)].c_str(),
                      d.score);
        lines += buf;
      }
      write_text(fs::path(out_dir) / "detections.txt", lines);
      write_text(fs::path(out_dir) / "config.txt", effective.to_string());
      std::cout << dets.size() << " detections written to " << out_dir << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "numeric divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const VocabularyError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const VersionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
