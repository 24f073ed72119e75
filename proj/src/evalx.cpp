#include "curvseg/evalx.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace curvseg {

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 20; k <= 60; k += 5) t.push_back(k / 100.0);
  return t;
}

namespace {

struct Overlap {
  std::size_t inter = 0;
  std::size_t uni = 0;
  std::size_t a = 0;
  std::size_t b = 0;
};

Overlap overlap(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask comparison: dimension mismatch");
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0;
    const bool y = b[i] != 0;
    o.inter += (x && y) ? 1 : 0;
    o.uni += (x || y) ? 1 : 0;
    o.a += x ? 1 : 0;
    o.b += y ? 1 : 0;
  }
  return o;
}

double ratio_or_one(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

// An undefined ratio is 1 only when both sides are empty.
double safe_ratio(std::size_t num, std::size_t den, bool both_empty) {
  if (den == 0) return both_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

double mask_iou(const Mask& a, const Mask& b) {
  const Overlap o = overlap(a, b);
  return ratio_or_one(o.inter, o.uni);
}

double mask_dice(const Mask& a, const Mask& b) {
  const Overlap o = overlap(a, b);
  return ratio_or_one(2 * o.inter, o.a + o.b);
}

double ThresholdCounts::precision() const { return safe_ratio(tp, tp + fp, fp == 0 && fn == 0); }
double ThresholdCounts::recall() const { return safe_ratio(tp, tp + fn, fp == 0 && fn == 0); }

std::vector<ThresholdCounts> match_instances(const InstanceSet& pred, const InstanceSet& gt,
                                             const std::vector<double>& thresholds) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("match_instances: prediction and ground truth differ in dimensions");
  }
  pred.validate();
  gt.validate();
  struct Pair {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      const double iou = mask_iou(pred.masks[p], gt.masks[g]);
      if (iou > 0.0) pairs.push_back({iou, p, g});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return std::tie(y.iou, x.p, x.g) < std::tie(x.iou, y.p, y.g);
  });

  std::vector<ThresholdCounts> out;
  for (double t : thresholds) {
    std::vector<bool> p_used(pred.size(), false);
    std::vector<bool> g_used(gt.size(), false);
    std::size_t tp = 0;
    for (const auto& pr : pairs) {
      if (pr.iou < t) break;
      if (p_used[pr.p] || g_used[pr.g]) continue;
      p_used[pr.p] = true;
      g_used[pr.g] = true;
      ++tp;
    }
    out.push_back({t, tp, pred.size() - tp, gt.size() - tp});
  }
  return out;
}

namespace {

MetricReport report_from_counts(const std::vector<ThresholdCounts>& counts) {
  MetricReport r;
  for (const auto& c : counts) {
    ThresholdScore s{c.threshold, c.precision(), c.recall(), c.tp, c.fp, c.fn};
    r.ap += s.ap;
    r.ar += s.ar;
    r.per_threshold.push_back(s);
  }
  if (!counts.empty()) {
    r.ap /= static_cast<double>(counts.size());
    r.ar /= static_cast<double>(counts.size());
  }
  return r;
}

}  // namespace

MetricReport instance_ap_ar(const InstanceSet& pred, const InstanceSet& gt,
                            const std::vector<double>& thresholds) {
  return report_from_counts(match_instances(pred, gt, thresholds));
}

MetricAccumulator::MetricAccumulator(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)) {
  for (double t : thresholds_) totals_.push_back({t, 0, 0, 0});
}

MetricReport MetricAccumulator::add(const InstanceSet& pred, const InstanceSet& gt) {
  const auto counts = match_instances(pred, gt, thresholds_);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    totals_[i].tp += counts[i].tp;
    totals_[i].fp += counts[i].fp;
    totals_[i].fn += counts[i].fn;
  }
  const Overlap o = overlap(pred.union_mask(), gt.union_mask());
  inter_ += o.inter;
  uni_ += o.uni;
  pred_area_ += o.a;
  gt_area_ += o.b;

  MetricReport r = report_from_counts(counts);
  r.semantic_iou = ratio_or_one(o.inter, o.uni);
  r.semantic_dice = ratio_or_one(2 * o.inter, o.a + o.b);
  images_.push_back(r);
  return r;
}

MetricReport MetricAccumulator::micro() const {
  MetricReport r = report_from_counts(totals_);
  r.semantic_iou = ratio_or_one(inter_, uni_);
  r.semantic_dice = ratio_or_one(2 * inter_, pred_area_ + gt_area_);
  return r;
}

MetricReport MetricAccumulator::macro() const {
  MetricReport r;
  if (images_.empty()) return micro();
  for (const auto& im : images_) {
    r.semantic_iou += im.semantic_iou;
    r.semantic_dice += im.semantic_dice;
    r.ap += im.ap;
    r.ar += im.ar;
  }
  const auto n = static_cast<double>(images_.size());
  r.semantic_iou /= n;
  r.semantic_dice /= n;
  r.ap /= n;
  r.ar /= n;
  for (std::size_t t = 0; t < thresholds_.size(); ++t) {
    ThresholdScore s{thresholds_[t], 0.0, 0.0, 0, 0, 0};
    for (const auto& im : images_) {
      s.ap += im.per_threshold[t].ap;
      s.ar += im.per_threshold[t].ar;
      s.tp += im.per_threshold[t].tp;
      s.fp += im.per_threshold[t].fp;
      s.fn += im.per_threshold[t].fn;
    }
    s.ap /= n;
    s.ar /= n;
    r.per_threshold.push_back(s);
  }
  return r;
}

InstanceSet connected_components(const Mask& foreground) {
  const std::size_t h = foreground.height();
  const std::size_t w = foreground.width();
  InstanceSet out(h, w);
  Grid<int> label(h, w, -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < foreground.size(); ++start) {
    if (!foreground[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(out.masks.size());
    Mask component(h, w, 0);
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      component[cur] = 1;
      const std::size_t r = cur / w;
      const std::size_t c = cur % w;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const auto nr = static_cast<long>(r) + dr;
          const auto nc = static_cast<long>(c) + dc;
          if (nr < 0 || nc < 0 || nr >= static_cast<long>(h) || nc >= static_cast<long>(w)) continue;
          const std::size_t n = static_cast<std::size_t>(nr) * w + static_cast<std::size_t>(nc);
          if (foreground[n] && label[n] < 0) {
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    out.masks.push_back(std::move(component));
  }
  return out;
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json j;
  j["iou"] = report.semantic_iou;
  j["dice"] = report.semantic_dice;
  j["ap"] = report.ap;
  j["ar"] = report.ar;
  j["per_threshold"] = nlohmann::json::array();
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (const auto& s : report.per_threshold) {
    j["per_threshold"].push_back(
        {{"t", s.threshold}, {"ap", s.ap}, {"ar", s.ar}, {"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}});
    tp += s.tp;
    fp += s.fp;
    fn += s.fn;
  }
  j["counts"] = {{"tp", tp}, {"fp", fp}, {"fn", fn}};
  return j;
}

}  // namespace curvseg
