#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace hansnet {

/// 8-bit grayscale PNG, row-major pixels.
void write_png_gray(const std::filesystem::path& path, std::size_t h, std::size_t w,
                    const std::vector<std::uint8_t>& pixels);

/// Linear map of [lo, hi] to 0..255 with clamping.
std::vector<std::uint8_t> to_gray8(const std::vector<double>& values, double lo, double hi);

}  // namespace hansnet
