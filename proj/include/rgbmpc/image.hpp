#pragma once

#include "rgbmpc/common.hpp"

#include <filesystem>
#include <vector>

namespace rgbmpc {

/// Row-major RGB image with linear values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Vec3f> pixels;

  Image() = default;
  Image(int w, int h, const Vec3f& fill = Vec3f::Zero()) : width(w), height(h), pixels(std::size_t(w) * h, fill) {}

  Vec3f& at(int x, int y) { return pixels[std::size_t(y) * width + x]; }
  const Vec3f& at(int x, int y) const { return pixels[std::size_t(y) * width + x]; }
};

/// 8-bit RGB PNG. Values are clamped and rounded.
void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

double mse(const Image& a, const Image& b);
/// Peak signal-to-noise ratio in dB for unit peak; +inf for identical images.
double psnr(const Image& a, const Image& b);

}  // namespace rgbmpc
