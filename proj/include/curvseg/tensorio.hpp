#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "curvseg/imagecore.hpp"

namespace curvseg {

struct TensorEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;  // row-major

  std::size_t element_count() const;
  friend bool operator==(const TensorEntry&, const TensorEntry&) = default;
};

/// Named f32 tensors in the "SEGT" v1 little-endian layout:
///   magic "SEGT" | version u8 = 1 | entry count u32
///   per entry: name length u16 | UTF-8 name | ndim u8 | dims u32 x ndim | f32 payload
class TensorContainer {
 public:
  static constexpr std::uint8_t kVersion = 1;

  /// Throws std::invalid_argument on duplicate names or a size mismatch.
  void add(TensorEntry entry);
  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> data);

  const std::vector<TensorEntry>& entries() const { return entries_; }
  const TensorEntry* find(const std::string& name) const;
  const TensorEntry& at(const std::string& name) const;

  std::string serialize() const;
  /// Throws ParseError on malformed bytes.
  static TensorContainer deserialize(const std::string& bytes);

  void write_file(const std::filesystem::path& path) const;
  static TensorContainer read_file(const std::filesystem::path& path);

  friend bool operator==(const TensorContainer&, const TensorContainer&) = default;

 private:
  std::vector<TensorEntry> entries_;
};

/// Writes bytes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file_bytes(const std::filesystem::path& path);

/// 8-bit binary PGM (P5). Values are scaled by 255, rounded and clamped.
std::string encode_pgm(const ImageGrid& image);
ImageGrid decode_pgm(const std::string& bytes);
void write_pgm(const std::filesystem::path& path, const ImageGrid& image);
ImageGrid read_pgm(const std::filesystem::path& path);

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

std::string encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::string& bytes);

/// InstanceSet <-> container entry "masks" with dims [n, H, W].
TensorContainer instances_to_container(const InstanceSet& set);
InstanceSet instances_from_container(const TensorContainer& tc);

}  // namespace curvseg
