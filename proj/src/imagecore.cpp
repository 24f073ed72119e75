#include "curvseg/imagecore.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace curvseg {

EmbeddingField::EmbeddingField(std::size_t height, std::size_t width, std::size_t dim, double fill)
    : height_(height), width_(width), dim_(dim), values_(height * width * dim, fill) {
  if (height == 0 || width == 0 || dim == 0) {
    throw std::invalid_argument("EmbeddingField: dimensions must be >= 1");
  }
}

EmbeddingField::EmbeddingField(std::size_t height, std::size_t width, std::size_t dim,
                               std::vector<double> values)
    : height_(height), width_(width), dim_(dim), values_(std::move(values)) {
  if (height == 0 || width == 0 || dim == 0) {
    throw std::invalid_argument("EmbeddingField: dimensions must be >= 1");
  }
  if (values_.size() != height * width * dim) {
    throw std::invalid_argument("EmbeddingField: value count does not match dimensions");
  }
}

bool EmbeddingField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void InstanceSet::validate() const {
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!masks[i].same_shape(height, width)) {
      throw std::invalid_argument("InstanceSet: mask " + std::to_string(i) +
                                  " does not match the set dimensions");
    }
  }
}

Mask InstanceSet::union_mask() const {
  Mask out(height, width, 0);
  for (const auto& m : masks) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] |= m[i];
  }
  return out;
}

Grid<int> InstanceSet::coverage() const {
  Grid<int> out(height, width, 0);
  for (const auto& m : masks) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += m[i] ? 1 : 0;
  }
  return out;
}

std::size_t InstanceSet::multi_assigned_count() const {
  if (masks.empty()) return 0;
  const auto cov = coverage();
  return static_cast<std::size_t>(
      std::count_if(cov.values().begin(), cov.values().end(), [](int c) { return c >= 2; }));
}

void AugmentParams::validate() const {
  if (!(rotation_degrees >= 0.0) || !(brightness_delta >= 0.0) || !(contrast_delta >= 0.0)) {
    throw std::invalid_argument("AugmentParams: magnitudes must be >= 0");
  }
  if (!(per_transform_probability >= 0.0 && per_transform_probability <= 1.0)) {
    throw std::invalid_argument("AugmentParams: probability must lie in [0,1]");
  }
}

namespace {

// v0 + f*(v1-v0), clamped so rounding can never leave [min(v0,v1), max(v0,v1)].
inline double lerp_bounded(double v0, double v1, double f) {
  const double v = v0 + f * (v1 - v0);
  return std::clamp(v, std::min(v0, v1), std::max(v0, v1));
}

struct AxisSample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<AxisSample> align_corners_axis(std::size_t src, std::size_t dst) {
  std::vector<AxisSample> out(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    const double pos =
        dst == 1 ? 0.0 : static_cast<double>(i * (src - 1)) / static_cast<double>(dst - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    lo = std::min(lo, src - 1);
    const std::size_t hi = std::min(lo + 1, src - 1);
    out[i] = {lo, hi, pos - static_cast<double>(lo)};
  }
  return out;
}

void check_upsample_dims(std::size_t sh, std::size_t sw, std::size_t th, std::size_t tw) {
  if (th == 0 || tw == 0) {
    throw std::invalid_argument("upsample_bilinear: target dimensions must be >= 1");
  }
  if (th < sh || tw < sw) {
    throw std::invalid_argument("upsample_bilinear: target must not be smaller than source");
  }
}

}  // namespace

ImageGrid upsample_bilinear(const ImageGrid& src, std::size_t target_h, std::size_t target_w) {
  check_upsample_dims(src.height(), src.width(), target_h, target_w);
  const auto rows = align_corners_axis(src.height(), target_h);
  const auto cols = align_corners_axis(src.width(), target_w);
  ImageGrid out(target_h, target_w);
  for (std::size_t r = 0; r < target_h; ++r) {
    const auto& ry = rows[r];
    for (std::size_t c = 0; c < target_w; ++c) {
      const auto& cx = cols[c];
      const double top = lerp_bounded(src.at(ry.lo, cx.lo), src.at(ry.lo, cx.hi), cx.frac);
      const double bot = lerp_bounded(src.at(ry.hi, cx.lo), src.at(ry.hi, cx.hi), cx.frac);
      out.at(r, c) = lerp_bounded(top, bot, ry.frac);
    }
  }
  return out;
}

EmbeddingField upsample_bilinear(const EmbeddingField& src, std::size_t target_h,
                                 std::size_t target_w) {
  check_upsample_dims(src.height(), src.width(), target_h, target_w);
  const auto rows = align_corners_axis(src.height(), target_h);
  const auto cols = align_corners_axis(src.width(), target_w);
  EmbeddingField out(target_h, target_w, src.dim());
  for (std::size_t r = 0; r < target_h; ++r) {
    const auto& ry = rows[r];
    for (std::size_t c = 0; c < target_w; ++c) {
      const auto& cx = cols[c];
      const auto v00 = src.at(ry.lo, cx.lo);
      const auto v01 = src.at(ry.lo, cx.hi);
      const auto v10 = src.at(ry.hi, cx.lo);
      const auto v11 = src.at(ry.hi, cx.hi);
      auto dst = out.at(r, c);
      for (std::size_t d = 0; d < src.dim(); ++d) {
        const double top = lerp_bounded(v00[d], v01[d], cx.frac);
        const double bot = lerp_bounded(v10[d], v11[d], cx.frac);
        dst[d] = lerp_bounded(top, bot, ry.frac);
      }
    }
  }
  return out;
}

template <typename T>
static Grid<T> flip_impl(const Grid<T>& g) {
  Grid<T> out(g.height(), g.width());
  for (std::size_t r = 0; r < g.height(); ++r) {
    for (std::size_t c = 0; c < g.width(); ++c) out.at(r, c) = g.at(r, g.width() - 1 - c);
  }
  return out;
}

ImageGrid flip_horizontal(const ImageGrid& image) { return flip_impl(image); }
Mask flip_horizontal(const Mask& mask) { return flip_impl(mask); }

namespace {

// Maps an output pixel to its source position under rotation about the center.
struct Rotation {
  double cos_t;
  double sin_t;
  double cy;
  double cx;

  Rotation(double degrees, std::size_t h, std::size_t w)
      : cos_t(std::cos(degrees * std::numbers::pi / 180.0)),
        sin_t(std::sin(degrees * std::numbers::pi / 180.0)),
        cy(0.5 * static_cast<double>(h - 1)),
        cx(0.5 * static_cast<double>(w - 1)) {}

  void source(std::size_t r, std::size_t c, double& sy, double& sx) const {
    const double dy = static_cast<double>(r) - cy;
    const double dx = static_cast<double>(c) - cx;
    sx = cx + cos_t * dx + sin_t * dy;
    sy = cy - sin_t * dx + cos_t * dy;
  }
};

}  // namespace

ImageGrid rotate(const ImageGrid& image, double degrees) {
  const std::size_t h = image.height();
  const std::size_t w = image.width();
  const Rotation rot(degrees, h, w);
  ImageGrid out(h, w, 0.0);
  const double max_y = static_cast<double>(h - 1);
  const double max_x = static_cast<double>(w - 1);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double sy = 0.0;
      double sx = 0.0;
      rot.source(r, c, sy, sx);
      if (sy < 0.0 || sx < 0.0 || sy > max_y || sx > max_x) continue;
      const auto y0 = static_cast<std::size_t>(std::floor(sy));
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      const double top = lerp_bounded(image.at(y0, x0), image.at(y0, x1), fx);
      const double bot = lerp_bounded(image.at(y1, x0), image.at(y1, x1), fx);
      out.at(r, c) = lerp_bounded(top, bot, fy);
    }
  }
  return out;
}

Mask rotate(const Mask& mask, double degrees) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  const Rotation rot(degrees, h, w);
  Mask out(h, w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double sy = 0.0;
      double sx = 0.0;
      rot.source(r, c, sy, sx);
      const double ry = std::floor(sy + 0.5);
      const double rx = std::floor(sx + 0.5);
      if (ry < 0.0 || rx < 0.0 || ry > static_cast<double>(h - 1) ||
          rx > static_cast<double>(w - 1)) {
        continue;
      }
      out.at(r, c) = mask.at(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
    }
  }
  return out;
}

Augmented augment(const ImageGrid& image, const InstanceSet& labels, const AugmentParams& params,
                  std::uint64_t rng_seed) {
  params.validate();
  labels.validate();
  if (!image.same_shape(labels.height, labels.width)) {
    throw std::invalid_argument("augment: image and labels differ in dimensions");
  }

  // Every draw happens unconditionally so the stream layout never depends on
  // which transforms fire.
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  const double p = params.per_transform_probability;
  const bool do_rotate = unit(rng) < p;
  const double angle = sym(rng) * params.rotation_degrees;
  const bool do_flip = unit(rng) < p;
  const bool do_brightness = unit(rng) < p;
  const double brightness = sym(rng) * params.brightness_delta;
  const bool do_contrast = unit(rng) < p;
  const double contrast = sym(rng) * params.contrast_delta;

  Augmented out{image, labels};
  if (do_rotate && angle != 0.0) {
    out.image = rotate(out.image, angle);
    for (auto& m : out.labels.masks) m = rotate(m, angle);
  }
  if (do_flip && params.flip) {
    out.image = flip_horizontal(out.image);
    for (auto& m : out.labels.masks) m = flip_horizontal(m);
  }
  if (do_brightness && brightness != 0.0) {
    for (auto& v : out.image.values()) v = std::clamp(v + brightness, 0.0, 1.0);
  }
  if (do_contrast && contrast != 0.0) {
    double mean = 0.0;
    for (double v : out.image.values()) mean += v;
    mean /= static_cast<double>(out.image.size());
    const double gain = 1.0 + contrast;
    for (auto& v : out.image.values()) v = std::clamp(mean + gain * (v - mean), 0.0, 1.0);
  }
  return out;
}

Mask threshold(const ImageGrid& grid, double cutoff) {
  Mask out(grid.height(), grid.width(), 0);
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i] >= cutoff ? 1 : 0;
  return out;
}

std::size_t count_set(const Mask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v; }));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ b);
}

}  // namespace curvseg
