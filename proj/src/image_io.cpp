#include "shapeup/synth/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace shapeup::synth {

namespace {

void write_png(const std::string& path, int w, int h, int channels,
               const std::vector<png_byte>& data) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("save_png: cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("save_png: libpng failure for " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i)
    rows[std::size_t(i)] =
        const_cast<png_bytep>(&data[std::size_t(i) * std::size_t(w) * std::size_t(channels)]);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

png_byte to_byte(float v) {
  v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return png_byte(v * 255.f + 0.5f);
}

}  // namespace

void save_png_gray(const Image& img, const std::string& path) {
  const int h = int(img.rows()), w = int(img.cols());
  std::vector<png_byte> data(std::size_t(h) * std::size_t(w));
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      data[std::size_t(i) * std::size_t(w) + std::size_t(j)] = to_byte(img(i, j));
  write_png(path, w, h, 1, data);
}

void save_png_rgb(const std::array<Image, 3>& rgb, const std::string& path) {
  const int h = int(rgb[0].rows()), w = int(rgb[0].cols());
  std::vector<png_byte> data(std::size_t(h) * std::size_t(w) * 3);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < 3; ++c)
        data[(std::size_t(i) * std::size_t(w) + std::size_t(j)) * 3 + std::size_t(c)] =
            to_byte(rgb[std::size_t(c)](i, j));
  write_png(path, w, h, 3, data);
}

}  // namespace shapeup::synth
