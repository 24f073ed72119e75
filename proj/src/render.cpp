#include "curvseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace curvseg {

const std::vector<Rgb>& instance_palette() {
  static const std::vector<Rgb> palette = {
      {230, 25, 75},  {245, 130, 48}, {0, 130, 200},  {60, 180, 75},  {145, 30, 180},
      {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {0, 128, 128},  {170, 110, 40},
  };
  return palette;
}

RgbImage render_overlay(const ImageGrid& image, const InstanceSet& instances) {
  instances.validate();
  if (!instances.masks.empty() && !image.same_shape(instances.height, instances.width)) {
    throw std::invalid_argument("render_overlay: image and instances differ in dimensions");
  }
  const auto& palette = instance_palette();
  RgbImage out{image.height(), image.width(), std::vector<std::uint8_t>(image.size() * 3)};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const auto g = static_cast<std::uint8_t>(std::round(std::clamp(image[i], 0.0, 1.0) * 255.0));
    Rgb color{g, g, g};
    std::size_t hits = 0;
    for (std::size_t k = 0; k < instances.masks.size(); ++k) {
      if (!instances.masks[k][i]) continue;
      ++hits;
      color = palette[k % palette.size()];
    }
    if (hits >= 2) color = kMultiAssignedColor;
    std::copy(color.begin(), color.end(), out.rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

}  // namespace curvseg
