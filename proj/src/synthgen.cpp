#include "curvseg/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <json.hpp>

#include "curvseg/errors.hpp"

namespace curvseg {

double point_segment_distance(double px, double py, const Point2& a, const Point2& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = std::clamp(((px - a.x) * dx + (py - a.y) * dy) / len2, 0.0, 1.0);
  }
  const double ex = px - (a.x + t * dx);
  const double ey = py - (a.y + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

Mask rasterize_polyline(const PolylineAnnotation& ann, std::size_t height, std::size_t width) {
  if (ann.points.empty()) {
    throw std::invalid_argument("rasterize_polyline: annotation has no points");
  }
  if (!(ann.width > 0.0)) {
    throw std::invalid_argument("rasterize_polyline: stroke width must be > 0");
  }
  Mask out(height, width, 0);
  const double radius = 0.5 * ann.width;
  const auto mark_segment = [&](const Point2& a, const Point2& b) {
    const double r0 = std::max(0.0, std::ceil(std::min(a.y, b.y) - radius));
    const double r1 = std::min(static_cast<double>(height - 1), std::floor(std::max(a.y, b.y) + radius));
    const double c0 = std::max(0.0, std::ceil(std::min(a.x, b.x) - radius));
    const double c1 = std::min(static_cast<double>(width - 1), std::floor(std::max(a.x, b.x) + radius));
    if (r0 > r1 || c0 > c1) return;
    for (auto r = static_cast<std::size_t>(r0); r <= static_cast<std::size_t>(r1); ++r) {
      for (auto c = static_cast<std::size_t>(c0); c <= static_cast<std::size_t>(c1); ++c) {
        if (out.at(r, c)) continue;
        if (point_segment_distance(static_cast<double>(c), static_cast<double>(r), a, b) <= radius) {
          out.at(r, c) = 1;
        }
      }
    }
  };
  if (ann.points.size() == 1) {
    mark_segment(ann.points[0], ann.points[0]);
  } else {
    for (std::size_t i = 0; i + 1 < ann.points.size(); ++i) {
      mark_segment(ann.points[i], ann.points[i + 1]);
    }
  }
  return out;
}

void SceneSpec::validate() const {
  if (height == 0 || width == 0) throw std::invalid_argument("SceneSpec: empty image");
  if (min_instances < 1 || max_instances < min_instances) {
    throw std::invalid_argument("SceneSpec: instance count range must satisfy 1 <= min <= max");
  }
  if (!(min_stroke_width > 0.0) || max_stroke_width < min_stroke_width) {
    throw std::invalid_argument("SceneSpec: stroke width range must satisfy 0 < min <= max");
  }
  if (min_control_points < 2 || max_control_points < min_control_points) {
    throw std::invalid_argument("SceneSpec: control point range must satisfy 2 <= min <= max");
  }
  if (max_turn_degrees < 0.0) throw std::invalid_argument("SceneSpec: max_turn_degrees < 0");
  if (max_contrast < min_contrast) throw std::invalid_argument("SceneSpec: empty contrast range");
  if (noise_amplitude < 0.0) throw std::invalid_argument("SceneSpec: noise_amplitude < 0");
  if (max_retries < 1) throw std::invalid_argument("SceneSpec: max_retries must be >= 1");
}

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Walks from `from` along `heading`; a step leaving the frame is cut at the border
// and ends the walk.
void walk(std::vector<Point2>& out, Point2 from, double heading, int steps, double step_len,
          double max_turn, double max_x, double max_y, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> turn(-max_turn, max_turn);
  std::uniform_real_distribution<double> len_jitter(0.85, 1.15);
  for (int s = 0; s < steps; ++s) {
    if (s > 0) heading += turn(rng);
    const double len = step_len * len_jitter(rng);
    const double dx = std::cos(heading) * len;
    const double dy = std::sin(heading) * len;
    // Largest fraction of the step that stays inside [0,max_x] x [0,max_y].
    double t = 1.0;
    const auto limit = [&t](double pos, double d, double hi) {
      if (d > 0.0) t = std::min(t, (hi - pos) / d);
      if (d < 0.0) t = std::min(t, (0.0 - pos) / d);
    };
    limit(from.x, dx, max_x);
    limit(from.y, dy, max_y);
    t = std::max(t, 0.0);
    if (t <= 1e-9) break;
    Point2 next{from.x + t * dx, from.y + t * dy};
    out.push_back(next);
    from = next;
    if (t < 1.0) break;
  }
}

struct Attempt {
  std::vector<PolylineAnnotation> annotations;
  std::vector<double> contrasts;
};

Attempt draw_curves(const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count_dist(spec.min_instances, spec.max_instances);
  std::uniform_int_distribution<int> points_dist(spec.min_control_points, spec.max_control_points);
  std::uniform_real_distribution<double> width_dist(spec.min_stroke_width, spec.max_stroke_width);
  std::uniform_real_distribution<double> contrast_dist(spec.min_contrast, spec.max_contrast);

  const double max_x = static_cast<double>(spec.width - 1);
  const double max_y = static_cast<double>(spec.height - 1);
  const double span = std::hypot(max_x, max_y);
  const int n = count_dist(rng);
  const double base_heading = unit(rng) * std::numbers::pi;
  const double spacing = std::numbers::pi / n;
  const double slack = std::max(0.0, spacing - spec.min_crossing_angle_degrees * kDegToRad);
  const Point2 center{0.5 * max_x + (unit(rng) - 0.5) * 0.2 * max_x,
                      0.5 * max_y + (unit(rng) - 0.5) * 0.2 * max_y};

  Attempt out;
  for (int k = 0; k < n; ++k) {
    const int m = points_dist(rng);
    double heading = 0.0;
    Point2 anchor;
    if (spec.require_crossing) {
      heading = base_heading + k * spacing + (unit(rng) - 0.5) * slack;
      const double offset = (unit(rng) - 0.5) * 0.1 * std::min(max_x, max_y);
      anchor = {center.x - std::sin(heading) * offset, center.y + std::cos(heading) * offset};
    } else {
      heading = unit(rng) * 2.0 * std::numbers::pi;
      anchor = {(0.1 + 0.8 * unit(rng)) * max_x, (0.1 + 0.8 * unit(rng)) * max_y};
    }
    // Split the remaining m-1 control points between the two directions.
    std::uniform_int_distribution<int> split_dist(1, std::max(1, m - 2));
    const int forward = split_dist(rng);
    const int backward = m - 1 - forward;
    const double step_len = span / std::max(1, m - 1);
    const double max_turn = spec.max_turn_degrees * kDegToRad;

    std::vector<Point2> back_pts;
    walk(back_pts, anchor, heading + std::numbers::pi, backward, step_len, max_turn, max_x, max_y,
         rng);
    std::vector<Point2> fwd_pts;
    walk(fwd_pts, anchor, heading, forward, step_len, max_turn, max_x, max_y, rng);

    PolylineAnnotation ann;
    ann.width = width_dist(rng);
    ann.points.assign(back_pts.rbegin(), back_pts.rend());
    ann.points.push_back(anchor);
    ann.points.insert(ann.points.end(), fwd_pts.begin(), fwd_pts.end());
    out.annotations.push_back(std::move(ann));
    out.contrasts.push_back(contrast_dist(rng));
  }
  return out;
}

bool masks_overlap(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] && b[i]) return true;
  }
  return false;
}

}  // namespace

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  if (spec.require_crossing && spec.max_instances >= 2 &&
      spec.min_crossing_angle_degrees * spec.max_instances > 180.0 + 1e-9) {
    throw GenerationError("generate_scene: min_crossing_angle_degrees too large for " +
                          std::to_string(spec.max_instances) + " crossing curves");
  }
  const double min_dim = static_cast<double>(std::min(spec.height, spec.width));
  if (spec.min_stroke_width >= min_dim) {
    throw GenerationError("generate_scene: stroke width does not fit the image");
  }

  for (int attempt = 0; attempt < spec.max_retries; ++attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.rng_seed),
                      static_cast<std::uint32_t>(spec.rng_seed >> 32),
                      static_cast<std::uint32_t>(attempt)};
    std::mt19937_64 rng(seq);
    Attempt a = draw_curves(spec, rng);

    Scene scene;
    scene.instances = InstanceSet(spec.height, spec.width);
    bool ok = true;
    for (const auto& ann : a.annotations) {
      Mask m = rasterize_polyline(ann, spec.height, spec.width);
      // A curve must be visibly longer than it is wide.
      if (static_cast<double>(count_set(m)) < 4.0 * ann.width * ann.width) ok = false;
      scene.instances.masks.push_back(std::move(m));
    }
    if (!ok) continue;

    const auto& masks = scene.instances.masks;
    bool all_pairs_cross = true;
    for (std::size_t i = 0; i < masks.size(); ++i) {
      for (std::size_t j = i + 1; j < masks.size(); ++j) {
        if (masks_overlap(masks[i], masks[j])) {
          scene.crossing = true;
        } else {
          all_pairs_cross = false;
        }
      }
    }
    if (spec.require_crossing && masks.size() >= 2 && !all_pairs_cross) continue;

    scene.image = ImageGrid(spec.height, spec.width, spec.background);
    for (std::size_t k = 0; k < masks.size(); ++k) {
      for (std::size_t i = 0; i < scene.image.size(); ++i) {
        if (masks[k][i]) scene.image[i] += a.contrasts[k];
      }
    }
    if (spec.noise_amplitude > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise_amplitude);
      for (auto& v : scene.image.values()) v += noise(rng);
    }
    for (auto& v : scene.image.values()) v = std::clamp(v, 0.0, 1.0);
    scene.annotations = std::move(a.annotations);
    return scene;
  }
  throw GenerationError("generate_scene: no valid scene after " + std::to_string(spec.max_retries) +
                        " attempts (seed " + std::to_string(spec.rng_seed) + ")");
}

LabelMap make_training_labels(const InstanceSet& gt, std::uint64_t rng_seed) {
  gt.validate();
  LabelMap labels(gt.height, gt.width, 0);
  std::mt19937_64 rng(rng_seed);
  std::vector<int> members;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    members.clear();
    for (std::size_t k = 0; k < gt.masks.size(); ++k) {
      if (gt.masks[k][i]) members.push_back(static_cast<int>(k) + 1);
    }
    if (members.size() == 1) {
      labels[i] = members[0];
    } else if (members.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      labels[i] = members[pick(rng)];
    }
  }
  return labels;
}

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ParseError("annotations: " + where + ": " + what);
}

std::size_t read_dim(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_number_integer() || doc[key].get<long long>() < 1) {
    fail(key, "must be an integer >= 1");
  }
  return doc[key].get<std::size_t>();
}

}  // namespace

AnnotationDocument parse_annotations(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("document", e.what());
  }
  if (!doc.is_object()) fail("document", "top level must be an object");
  AnnotationDocument out;
  out.height = read_dim(doc, "height");
  out.width = read_dim(doc, "width");
  if (!doc.contains("instances") || !doc["instances"].is_array()) {
    fail("instances", "must be an array");
  }
  const auto& list = doc["instances"];
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string where = "instances[" + std::to_string(i) + "]";
    const auto& entry = list[i];
    if (!entry.is_object()) fail(where, "must be an object");
    if (!entry.contains("width") || !entry["width"].is_number()) fail(where, "missing numeric width");
    PolylineAnnotation ann;
    ann.width = entry["width"].get<double>();
    if (!std::isfinite(ann.width) || !(ann.width > 0.0)) fail(where, "width must be finite and > 0");
    if (!entry.contains("points") || !entry["points"].is_array() || entry["points"].empty()) {
      fail(where, "points must be a non-empty array");
    }
    for (const auto& p : entry["points"]) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
        fail(where, "each point must be [x, y]");
      }
      const Point2 pt{p[0].get<double>(), p[1].get<double>()};
      if (!std::isfinite(pt.x) || !std::isfinite(pt.y)) fail(where, "non-finite coordinate");
      ann.points.push_back(pt);
    }
    out.instances.push_back(std::move(ann));
  }
  return out;
}

std::string write_annotations(const AnnotationDocument& doc) {
  json out;
  out["height"] = doc.height;
  out["width"] = doc.width;
  out["instances"] = json::array();
  for (const auto& ann : doc.instances) {
    json pts = json::array();
    for (const auto& p : ann.points) pts.push_back({p.x, p.y});
    out["instances"].push_back({{"points", std::move(pts)}, {"width", ann.width}});
  }
  return out.dump(2) + "\n";
}

}  // namespace curvseg
