#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inpaint/volume.hpp"

namespace inpaint::cli {

struct GrayImage {
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<std::uint8_t> pixels; ///< row-major
};

inline constexpr std::uint8_t kSeparatorValue = 255;

/// Slice `index` along `axis` of every volume, tiled left to right with
/// 1-px separators. Each tile is min-max scaled to 0..255; a constant tile is
/// mid-gray (128). Shorter tiles are padded with black. Throws BadSliceIndex.
GrayImage montage(const std::vector<Volume> &volumes, int axis, std::int64_t index);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const GrayImage &image);
void write_pgm(const std::string &path, const GrayImage &image);

} // namespace inpaint::cli
