#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace glyphgen {

/// Row-major grayscale image with pixels in [0,1].
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Pixel value as stored in an 8-bit file.
inline std::uint8_t quantize(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<std::uint8_t>(c * 255.0f + 0.5f);
}

/// Writes an 8-bit grayscale PNG. Throws IoError on failure.
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Reads a PNG (any bit depth / color type is converted to 8-bit gray).
GrayImage read_png(const std::filesystem::path& path);

}  // namespace glyphgen
