#pragma once

#include "srmmd/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace srmmd {

/// 8-bit binary PPM (P6, maxval 255). Pixels are row-major RGB triples; the
/// read/write pair round-trips bit-exactly.
struct PpmImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  Index pixel_count() const { return width * height; }

  /// Pixel color in [0, 1]^3 (value / 255).
  Vector color(Index pixel) const {
    Vector c(3);
    for (Index k = 0; k < 3; ++k) c[k] = pixels[static_cast<std::size_t>(3 * pixel + k)] / 255.0;
    return c;
  }

  /// Clamp to [0, 1] and quantize round-half-up to 8 bits.
  void set_color(Index pixel, const VectorRef& c) {
    for (Index k = 0; k < 3; ++k) {
      const double v = std::min(1.0, std::max(0.0, c[k]));
      pixels[static_cast<std::size_t>(3 * pixel + k)] = static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
    }
  }
};

/// Malformed input throws std::runtime_error naming the byte offset; any maxval
/// other than 255 is an unsupported-format error.
PpmImage read_ppm(const std::string& path);

void write_ppm(const PpmImage& image, const std::string& path);

}  // namespace srmmd
