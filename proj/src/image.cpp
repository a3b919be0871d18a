#include "rgbmpc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace rgbmpc {

void write_png(const std::filesystem::path& path, const Image& img) {
  std::vector<png_byte> buf(std::size_t(img.width) * img.height * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(img.pixels[i][c], 0.0f, 1.0f);
      buf[3 * i + c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw InputError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw InputError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw InputError("corrupt PNG " + path.string() + ": " + png.message);
  }
  Image img(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = Vec3f(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) / 255.0f;
  }
  return img;
}

double mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw InputError("image size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    acc += (a.pixels[i] - b.pixels[i]).cast<double>().squaredNorm();
  }
  return acc / (3.0 * a.pixels.size());
}

double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

}  // namespace rgbmpc
