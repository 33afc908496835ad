#include "remotedet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <tuple>

#include "remotedet/ops.hpp"

namespace remotedet {

namespace {

// Forward-mode value with partials w.r.t. the predicted (cx, cy, w, h).
struct Dual {
  double v = 0;
  std::array<double, 4> d{};
  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: constants promote implicitly
  static Dual seed(double value, int i) {
    Dual x(value);
    x.d[i] = 1.0;
    return x;
  }
};

Dual operator+(const Dual& a, const Dual& b) {
  Dual r(a.v + b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}
Dual operator-(const Dual& a, const Dual& b) {
  Dual r(a.v - b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}
Dual operator*(const Dual& a, const Dual& b) {
  Dual r(a.v * b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}
Dual operator/(const Dual& a, const Dual& b) {
  Dual r(a.v / b.v);
  for (int i = 0; i < 4; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
  return r;
}
Dual dmin(const Dual& a, const Dual& b) { return a.v <= b.v ? a : b; }
Dual dmax(const Dual& a, const Dual& b) { return a.v >= b.v ? a : b; }
Dual datan(const Dual& a) {
  Dual r(std::atan(a.v));
  for (int i = 0; i < 4; ++i) r.d[i] = a.d[i] / (1.0 + a.v * a.v);
  return r;
}

double value(double x) { return x; }
double value(const Dual& x) { return x.v; }
double dmin(double a, double b) { return std::min(a, b); }
double dmax(double a, double b) { return std::max(a, b); }
double datan(double a) { return std::atan(a); }

constexpr double kAspectEps = 1e-12;

template <class T>
struct GenericTerms {
  T iou, distance, v;
};

template <class T>
GenericTerms<T> generic_terms(const T& cx, const T& cy, const T& w, const T& h, const Box& t) {
  const T x1 = cx - w * 0.5, x2 = cx + w * 0.5, y1 = cy - h * 0.5, y2 = cy + h * 0.5;
  T iw = dmin(x2, T(t.x2())) - dmax(x1, T(t.x1()));
  T ih = dmin(y2, T(t.y2())) - dmax(y1, T(t.y1()));
  if (value(iw) <= 0) iw = T(0.0);
  if (value(ih) <= 0) ih = T(0.0);
  const T inter = iw * ih;
  const T uni = w * h + T(t.area()) - inter;
  const T iou = inter / uni;
  const T cw = dmax(x2, T(t.x2())) - dmin(x1, T(t.x1()));
  const T ch = dmax(y2, T(t.y2())) - dmin(y1, T(t.y1()));
  const T dx = cx - T(t.cx), dy = cy - T(t.cy);
  const T distance = (dx * dx + dy * dy) / (cw * cw + ch * ch);
  const T dv = T(std::atan(t.w / (t.h + kAspectEps))) - datan(w / (h + T(kAspectEps)));
  const T v = dv * dv * (4.0 / (std::numbers::pi * std::numbers::pi));
  return {iou, distance, v};
}

void validate_target(const Box& target) {
  if (!(target.w > 0) || !(target.h > 0)) throw ValidationError("ciou: degenerate target box");
}

double alpha_of(double iou, double v) { return v > 0 ? v / ((1.0 - iou) + v) : 0.0; }

}  // namespace

CiouTerms ciou_terms(const Box& pred, const Box& target) {
  validate_target(target);
  const auto g = generic_terms(pred.cx, pred.cy, pred.w, pred.h, target);
  CiouTerms out;
  out.iou = g.iou;
  out.distance = g.distance;
  out.v = g.v;
  out.alpha = alpha_of(g.iou, g.v);
  out.loss = 1.0 - g.iou + g.distance + out.alpha * g.v;
  return out;
}

double ciou_loss(const Box& pred, const Box& target) { return ciou_terms(pred, target).loss; }

double ciou_loss_fixed_alpha(const Box& pred, const Box& target, double alpha) {
  validate_target(target);
  const auto g = generic_terms(pred.cx, pred.cy, pred.w, pred.h, target);
  return 1.0 - g.iou + g.distance + alpha * g.v;
}

std::array<double, 4> ciou_loss_grad(const Box& pred, const Box& target, double alpha) {
  validate_target(target);
  const auto g = generic_terms(Dual::seed(pred.cx, 0), Dual::seed(pred.cy, 1), Dual::seed(pred.w, 2),
                               Dual::seed(pred.h, 3), target);
  const Dual loss = Dual(1.0) - g.iou + g.distance + Dual(alpha) * g.v;
  return loss.d;
}

double smooth_bce(double logit, double target, double eps) {
  const double y = target * (1.0 - eps) + 0.5 * eps;
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

double smooth_bce_grad(double logit, double target, double eps) {
  const double y = target * (1.0 - eps) + 0.5 * eps;
  return sigmoid(logit) - y;
}

std::vector<Assignment> assign_targets(const std::vector<GroundTruth>& gts, const LossConfig& config,
                                       const std::vector<std::array<std::int64_t, 2>>& grid_sizes) {
  const HeadLayout& layout = config.layout;
  std::vector<Assignment> out;
  for (int l = 0; l < layout.levels(); ++l) {
    const double stride = layout.strides[l];
    const std::int64_t gh = grid_sizes[l][0], gw = grid_sizes[l][1];
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const Box& b = gts[g].box;
      const double gx = b.cx / stride, gy = b.cy / stride, bw = b.w / stride, bh = b.h / stride;
      const double fx = gx - std::floor(gx), fy = gy - std::floor(gy);
      const double ix = static_cast<double>(gw) - gx, iy = static_cast<double>(gh) - gy;
      std::vector<std::array<std::int64_t, 2>> cells = {{0, 0}};
      if (fx < 0.5 && gx > 1.0) cells.push_back({-1, 0});
      if (fy < 0.5 && gy > 1.0) cells.push_back({0, -1});
      if (ix - std::floor(ix) < 0.5 && ix > 1.0) cells.push_back({1, 0});
      if (iy - std::floor(iy) < 0.5 && iy > 1.0) cells.push_back({0, 1});
      for (int a = 0; a < layout.anchors(); ++a) {
        const double anchor = layout.anchor_multipliers[a];
        const double ratio = std::max({bw / anchor, anchor / bw, bh / anchor, anchor / bh});
        if (!(ratio < config.anchor_ratio)) continue;
        for (const auto& off : cells) {
          const std::int64_t cx = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(gx)) + off[0], 0, gw - 1);
          const std::int64_t cy = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(gy)) + off[1], 0, gh - 1);
          out.push_back(Assignment{l, a, cx, cy, g,
                                   Box{gx - static_cast<double>(cx), gy - static_cast<double>(cy), bw, bh}});
        }
      }
    }
  }
  return out;
}

LossResult total_loss(const std::vector<Tensor>& raw, const std::vector<GroundTruth>& gts, const LossConfig& config,
                      const LossFreeze* freeze) {
  const HeadLayout& layout = config.layout;
  if (static_cast<int>(raw.size()) != layout.levels()) throw DimensionError("total_loss: level count mismatch");
  std::vector<std::array<std::int64_t, 2>> grids;
  std::int64_t total_slots = 0;
  for (const Tensor& p : raw) {
    if (p.rank() != 3 || p.dim(0) != layout.channels()) {
      throw DimensionError("total_loss: raw prediction shape " + shape_to_string(p.shape()));
    }
    grids.push_back({p.dim(1), p.dim(2)});
    total_slots += layout.anchors() * p.dim(1) * p.dim(2);
  }
  for (const auto& gt : gts) {
    if (gt.class_id < 0 || gt.class_id >= layout.num_classes) throw ValidationError("total_loss: class id out of range");
  }

  LossResult r;
  for (const Tensor& p : raw) r.grad.push_back(Tensor::zeros_like(p));
  const auto matches = assign_targets(gts, config, grids);
  r.matches = matches.size();
  if (freeze && (freeze->alpha.size() != matches.size() || freeze->obj_target.size() != matches.size())) {
    throw ValidationError("total_loss: frozen values do not match the assignment");
  }
  const int fields = layout.fields();
  const double eps = config.label_smoothing;

  // Objectness targets, keyed by slot; several matches on one slot keep the largest.
  std::map<std::tuple<int, int, std::int64_t, std::int64_t>, double> obj_targets;
  const double n_match = static_cast<double>(std::max<std::size_t>(matches.size(), 1));
  const double cls_norm = n_match * layout.num_classes;

  for (std::size_t m = 0; m < matches.size(); ++m) {
    const Assignment& as = matches[m];
    const Tensor& p = raw[as.level];
    Tensor& g = r.grad[as.level];
    auto field = [&](int f) { return p.at(as.anchor * fields + f, as.cell_y, as.cell_x); };
    auto grad_at = [&](int f) -> double& { return g.at(as.anchor * fields + f, as.cell_y, as.cell_x); };
    const double anchor = layout.anchor_multipliers[as.anchor];
    const Box pred{decode_offset(field(0)), decode_offset(field(1)), decode_extent(field(2), anchor),
                   decode_extent(field(3), anchor)};
    const CiouTerms terms = ciou_terms(pred, as.target);
    const double alpha = freeze ? freeze->alpha[m] : terms.alpha;
    const double loss = freeze ? ciou_loss_fixed_alpha(pred, as.target, alpha) : terms.loss;
    r.box += loss / n_match;
    const auto dbox = ciou_loss_grad(pred, as.target, alpha);
    const double scale = config.weights.box / n_match;
    for (int k = 0; k < 2; ++k) {
      const double s = sigmoid(field(k));
      grad_at(k) += scale * dbox[k] * 2.0 * s * (1.0 - s);
    }
    for (int k = 2; k < 4; ++k) {
      const double s = sigmoid(field(k));
      grad_at(k) += scale * dbox[k] * 8.0 * s * s * (1.0 - s) * anchor;
    }

    const double obj_t = freeze ? freeze->obj_target[m] : std::clamp(1.0 - terms.loss, 0.0, 1.0);
    r.frozen.alpha.push_back(alpha);
    r.frozen.obj_target.push_back(obj_t);
    auto key = std::make_tuple(as.level, as.anchor, as.cell_y, as.cell_x);
    auto it = obj_targets.find(key);
    if (it == obj_targets.end()) obj_targets.emplace(key, obj_t);
    else it->second = std::max(it->second, obj_t);

    for (int k = 0; k < layout.num_classes; ++k) {
      const double target = k == gts[as.gt].class_id ? 1.0 : 0.0;
      r.cls += smooth_bce(field(5 + k), target, eps) / cls_norm;
      grad_at(5 + k) += config.weights.cls * smooth_bce_grad(field(5 + k), target, eps) / cls_norm;
    }
  }
  if (matches.empty()) {
    r.box = 0.0;
    r.cls = 0.0;
  }

  const double obj_norm = static_cast<double>(total_slots);
  for (int l = 0; l < layout.levels(); ++l) {
    const Tensor& p = raw[l];
    for (int a = 0; a < layout.anchors(); ++a)
      for (std::int64_t y = 0; y < p.dim(1); ++y)
        for (std::int64_t x = 0; x < p.dim(2); ++x) {
          auto it = obj_targets.find(std::make_tuple(l, a, y, x));
          const double target = it == obj_targets.end() ? 0.0 : it->second;
          const double logit = p.at(a * fields + 4, y, x);
          r.obj += smooth_bce(logit, target, eps) / obj_norm;
          r.grad[l].at(a * fields + 4, y, x) += config.weights.obj * smooth_bce_grad(logit, target, eps) / obj_norm;
        }
  }
  r.total = config.weights.box * r.box + config.weights.obj * r.obj + config.weights.cls * r.cls;
  return r;
}

}  // namespace remotedet
