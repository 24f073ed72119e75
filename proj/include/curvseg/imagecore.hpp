#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvseg {

/// Dense row-major H x W field of scalars.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), values_(height * width, fill) {
    if (height == 0 || width == 0) {
      throw std::invalid_argument("Grid: dimensions must be >= 1");
    }
  }
  Grid(std::size_t height, std::size_t width, std::vector<T> values)
      : height_(height), width_(width), values_(std::move(values)) {
    if (height == 0 || width == 0) {
      throw std::invalid_argument("Grid: dimensions must be >= 1");
    }
    if (values_.size() != height * width) {
      throw std::invalid_argument("Grid: value count does not match dimensions");
    }
  }

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T& at(std::size_t row, std::size_t col) { return values_[row * width_ + col]; }
  const T& at(std::size_t row, std::size_t col) const { return values_[row * width_ + col]; }
  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }

  bool same_shape(std::size_t h, std::size_t w) const { return height_ == h && width_ == w; }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> values_;
};

/// Grayscale intensity or probability map.
using ImageGrid = Grid<double>;
/// Binary mask, 0 or 1 per pixel.
using Mask = Grid<std::uint8_t>;
/// Per-pixel instance id; 0 is background, k >= 1 is instance k.
using LabelMap = Grid<int>;

/// H x W x D field of per-pixel embedding vectors.
class EmbeddingField {
 public:
  EmbeddingField() = default;
  EmbeddingField(std::size_t height, std::size_t width, std::size_t dim, double fill = 0.0);
  EmbeddingField(std::size_t height, std::size_t width, std::size_t dim, std::vector<double> values);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t dim() const { return dim_; }

  std::span<double> at(std::size_t row, std::size_t col) {
    return {values_.data() + (row * width_ + col) * dim_, dim_};
  }
  std::span<const double> at(std::size_t row, std::size_t col) const {
    return {values_.data() + (row * width_ + col) * dim_, dim_};
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  friend bool operator==(const EmbeddingField&, const EmbeddingField&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// Per-instance binary masks over a common grid. Masks may overlap.
struct InstanceSet {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Mask> masks;

  InstanceSet() = default;
  InstanceSet(std::size_t h, std::size_t w) : height(h), width(w) {}

  std::size_t size() const { return masks.size(); }
  /// Throws std::invalid_argument if any mask disagrees with the common dims.
  void validate() const;
  Mask union_mask() const;
  /// Number of masks covering each pixel.
  Grid<int> coverage() const;
  /// Pixels covered by two or more masks.
  std::size_t multi_assigned_count() const;
};

/// Training-time augmentation settings. Each transform fires independently
/// with `per_transform_probability`.
struct AugmentParams {
  double rotation_degrees = 10.0;
  bool flip = true;
  double brightness_delta = 0.3;
  double contrast_delta = 0.3;
  double per_transform_probability = 0.2;

  void validate() const;
};

/// Bilinear upsampling, align-corners convention (corner pixels map to corner pixels).
ImageGrid upsample_bilinear(const ImageGrid& src, std::size_t target_h, std::size_t target_w);
EmbeddingField upsample_bilinear(const EmbeddingField& src, std::size_t target_h,
                                 std::size_t target_w);

ImageGrid flip_horizontal(const ImageGrid& image);
Mask flip_horizontal(const Mask& mask);

/// Rotation about the image center by `degrees` (counter-clockwise on screen).
/// Out-of-frame samples are 0.
ImageGrid rotate(const ImageGrid& image, double degrees);
/// Nearest-neighbour variant for masks.
Mask rotate(const Mask& mask, double degrees);

struct Augmented {
  ImageGrid image;
  InstanceSet labels;
};

/// Applies rotation, horizontal flip, brightness and contrast, each with its own
/// probability draw. Geometry is shared by image and masks; photometric changes
/// touch the image only. Deterministic in `rng_seed`.
Augmented augment(const ImageGrid& image, const InstanceSet& labels, const AugmentParams& params,
                  std::uint64_t rng_seed);

Mask threshold(const ImageGrid& grid, double cutoff);
std::size_t count_set(const Mask& mask);

std::uint64_t splitmix64(std::uint64_t x);
/// Independent stream seed for (base, a, b).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace curvseg
