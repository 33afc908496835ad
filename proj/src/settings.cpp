#include "remotedet/settings.hpp"

#include <cstdio>
#include <set>

namespace remotedet {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "seed",         "gt_form",      "fusion",     "modality",   "epochs",     "lr",         "lr_final",
      "batch",        "momentum",     "weight_decay", "grad_clip", "augment",   "width",      "state_size",
      "cfm_expand",   "image_size",   "train_size", "val_size",   "exclusivity", "low_light", "noise",
      "data",         "val_data",     "eval_conf",  "nms",        "conf",       "iterations", "warmup",
      "label_smoothing", "box_weight", "obj_weight", "cls_weight", "num_classes"};
  return keys;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

RunSettings settings_from(const KeyValueConfig& kv) {
  for (const auto& [k, v] : kv.values()) {
    if (!known_keys().count(k)) throw ConfigError("unknown config key '" + k + "'");
  }
  RunSettings s;
  TrainConfig& t = s.train;
  const std::int64_t seed = kv.get_int("seed", 0);
  if (seed < 0) throw ConfigError("seed must be non-negative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.gt_form = as_config_error([&] { return parse_gt_form(kv.get("gt_form", "fusion")); });
  t.model = detector_config_from(kv);
  t.epochs = static_cast<int>(kv.get_int("epochs", t.epochs));
  t.lr_init = kv.get_double("lr", t.lr_init);
  // The final rate keeps the default 1/5 ratio unless given explicitly.
  t.lr_final = kv.get_double("lr_final", t.lr_init * (2e-3 / 1e-2));
  t.batch = static_cast<int>(kv.get_int("batch", t.batch));
  t.momentum = kv.get_double("momentum", t.momentum);
  t.weight_decay = kv.get_double("weight_decay", t.weight_decay);
  t.grad_clip = kv.get_double("grad_clip", t.grad_clip);
  t.augment = kv.get_bool("augment", t.augment);
  t.label_smoothing = kv.get_double("label_smoothing", t.label_smoothing);
  t.loss_weights.box = kv.get_double("box_weight", t.loss_weights.box);
  t.loss_weights.obj = kv.get_double("obj_weight", t.loss_weights.obj);
  t.loss_weights.cls = kv.get_double("cls_weight", t.loss_weights.cls);
  t.eval_conf = kv.get_double("eval_conf", t.eval_conf);
  t.eval_iou = kv.get_double("nms", t.eval_iou);
  as_config_error([&] { t.validate(); return 0; });

  s.data.image_size = kv.get_int("image_size", s.data.image_size);
  s.data.exclusivity = kv.get_double("exclusivity", s.data.exclusivity);
  s.data.low_light = kv.get_double("low_light", s.data.low_light);
  s.data.noise = kv.get_double("noise", s.data.noise);
  s.data.num_classes = t.model.num_classes;
  as_config_error([&] { s.data.validate(); return 0; });

  s.train_size = kv.get_int("train_size", s.train_size);
  s.val_size = kv.get_int("val_size", s.val_size);
  if (s.train_size < 1 || s.val_size < 0) throw ConfigError("train_size must be >= 1 and val_size >= 0");
  s.data_dir = kv.get("data", "");
  s.val_dir = kv.get("val_data", "");
  s.conf = kv.get_double("conf", s.conf);
  s.iterations = static_cast<int>(kv.get_int("iterations", s.iterations));
  s.warmup = static_cast<int>(kv.get_int("warmup", s.warmup));
  if (!(s.conf > 0 && s.conf < 1) || !(t.eval_conf > 0 && t.eval_conf < 1) || !(t.eval_iou > 0 && t.eval_iou <= 1)) {
    throw ConfigError("thresholds must lie in (0,1)");
  }
  if (s.iterations < 10) throw ConfigError("iterations must be at least 10");
  if (s.warmup < 0) throw ConfigError("warmup must be non-negative");
  return s;
}

KeyValueConfig effective_config(const RunSettings& s) {
  const TrainConfig& t = s.train;
  KeyValueConfig kv = KeyValueConfig::parse(detector_config_text(t.model));
  kv.set("seed", std::to_string(t.seed));
  kv.set("gt_form", std::string(gt_form_name(t.gt_form)));
  kv.set("epochs", std::to_string(t.epochs));
  kv.set("lr", fmt(t.lr_init));
  kv.set("lr_final", fmt(t.lr_final));
  kv.set("batch", std::to_string(t.batch));
  kv.set("momentum", fmt(t.momentum));
  kv.set("weight_decay", fmt(t.weight_decay));
  kv.set("grad_clip", fmt(t.grad_clip));
  kv.set("augment", t.augment ? "true" : "false");
  kv.set("label_smoothing", fmt(t.label_smoothing));
  kv.set("box_weight", fmt(t.loss_weights.box));
  kv.set("obj_weight", fmt(t.loss_weights.obj));
  kv.set("cls_weight", fmt(t.loss_weights.cls));
  kv.set("eval_conf", fmt(t.eval_conf));
  kv.set("nms", fmt(t.eval_iou));
  kv.set("image_size", std::to_string(s.data.image_size));
  kv.set("exclusivity", fmt(s.data.exclusivity));
  kv.set("low_light", fmt(s.data.low_light));
  kv.set("noise", fmt(s.data.noise));
  kv.set("train_size", std::to_string(s.train_size));
  kv.set("val_size", std::to_string(s.val_size));
  kv.set("data", s.data_dir);
  kv.set("val_data", s.val_dir);
  kv.set("conf", fmt(s.conf));
  kv.set("iterations", std::to_string(s.iterations));
  kv.set("warmup", std::to_string(s.warmup));
  return kv;
}

std::vector<SamplePair> load_train_set(const RunSettings& s) {
  if (!s.data_dir.empty()) return read_dataset(s.data_dir, default_class_names());
  return generate_dataset(s.train_size, s.train.seed, s.data);
}

std::vector<SamplePair> load_val_set(const RunSettings& s) {
  if (!s.val_dir.empty()) return read_dataset(s.val_dir, default_class_names());
  if (s.val_size == 0) return {};
  return generate_dataset(s.val_size, s.train.seed, s.data, kValidationIndexBase);
}

}  // namespace remotedet
