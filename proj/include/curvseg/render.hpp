#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "curvseg/imagecore.hpp"
#include "curvseg/tensorio.hpp"

namespace curvseg {

using Rgb = std::array<std::uint8_t, 3>;

/// Instance colors, cycled when there are more instances than entries.
const std::vector<Rgb>& instance_palette();
/// Color of pixels that belong to two or more instances.
inline constexpr Rgb kMultiAssignedColor{255, 246, 200};

/// Grayscale background with a solid palette color per instance and
/// kMultiAssignedColor where instances overlap.
RgbImage render_overlay(const ImageGrid& image, const InstanceSet& instances);

}  // namespace curvseg
