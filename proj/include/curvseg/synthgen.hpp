#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curvseg/imagecore.hpp"

namespace curvseg {

struct Point2 {
  double x = 0.0;  // column
  double y = 0.0;  // row

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Ground-truth representation of one device: control points joined by straight
/// segments, stroked with `width` pixels.
struct PolylineAnnotation {
  std::vector<Point2> points;
  double width = 1.0;

  friend bool operator==(const PolylineAnnotation&, const PolylineAnnotation&) = default;
};

/// Marks every pixel whose center is within width/2 of the polyline (round caps
/// and joins). Throws std::invalid_argument on an empty point list.
Mask rasterize_polyline(const PolylineAnnotation& ann, std::size_t height, std::size_t width);

/// Euclidean distance from (px,py) to the segment a-b.
double point_segment_distance(double px, double py, const Point2& a, const Point2& b);

/// Parameters of the synthetic crossing-curve scene generator.
struct SceneSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  int min_instances = 2;
  int max_instances = 2;
  double min_stroke_width = 3.0;
  double max_stroke_width = 4.5;
  int min_control_points = 3;
  int max_control_points = 5;
  /// Maximum heading change between consecutive segments.
  double max_turn_degrees = 12.0;
  double min_contrast = 0.45;
  double max_contrast = 0.75;
  double background = 0.15;
  double noise_amplitude = 0.05;
  /// Route all curves through a shared central region so that they cross.
  bool require_crossing = true;
  /// Minimum angle between headings of curves at the crossing region.
  double min_crossing_angle_degrees = 50.0;
  int max_retries = 64;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Scene {
  ImageGrid image;
  InstanceSet instances;
  std::vector<PolylineAnnotation> annotations;
  /// True when some pixel belongs to two or more instances.
  bool crossing = false;
};

/// Renders a deterministic random scene. Throws GenerationError when the spec
/// cannot be satisfied within `max_retries` attempts.
Scene generate_scene(const SceneSpec& spec);

/// Collapses overlapping ground truth to one id per pixel; overlap pixels pick
/// uniformly among their instances. Ids are mask index + 1, background 0.
LabelMap make_training_labels(const InstanceSet& gt, std::uint64_t rng_seed);

struct AnnotationDocument {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PolylineAnnotation> instances;

  friend bool operator==(const AnnotationDocument&, const AnnotationDocument&) = default;
};

/// Parses {"height":..,"width":..,"instances":[{"points":[[x,y],..],"width":w},..]}.
/// Throws ParseError naming the offending entry.
AnnotationDocument parse_annotations(const std::string& json_text);
std::string write_annotations(const AnnotationDocument& doc);

}  // namespace curvseg
