#include "invreg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "invreg/errors.hpp"

namespace invreg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(),
                                                 [](char a, char b) { return std::tolower(a) == b; });
}

void write_png_bytes(const std::string& path, int rows, int cols, int channels,
                     const std::vector<unsigned char>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ConfigError("cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ConfigError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, cols, rows, 8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int i = 0; i < rows; ++i)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + std::size_t(i) * cols * channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ConfigError("cannot open image: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("png decode failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_packing(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  const int rows = png_get_image_height(png, info);
  const int cols = png_get_image_width(png, info);
  const int ch = png_get_channels(png, info);
  std::vector<unsigned char> buf(std::size_t(rows) * png_get_rowbytes(png, info));
  std::vector<png_bytep> ptrs(rows);
  for (int i = 0; i < rows; ++i) ptrs[i] = buf.data() + std::size_t(i) * png_get_rowbytes(png, info);
  png_read_image(png, ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Image out(rows, cols, ch);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      for (int k = 0; k < ch; ++k) out(i, j, k) = ptrs[i][std::size_t(j) * ch + k] / 255.0;
  return out;
}

void write_png(const std::string& path, const Image& image) {
  const int ch = image.channels();
  if (ch != 1 && ch != 3) throw ConfigError("png output needs 1 or 3 channels");
  std::vector<unsigned char> bytes(image.size());
  for (int i = 0; i < image.rows(); ++i)
    for (int j = 0; j < image.cols(); ++j)
      for (int k = 0; k < ch; ++k) {
        const double v = std::clamp(image(i, j, k), 0.0, 1.0);
        bytes[(std::size_t(i) * image.cols() + j) * ch + k] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
  write_png_bytes(path, image.rows(), image.cols(), ch, bytes);
}

void write_png_scaled(const std::string& path, const Image& image) {
  double mx = 0.0;
  for (double v : image.data()) mx = std::max(mx, v);
  Image scaled = image;
  if (mx > 0.0) scaled *= 1.0 / mx;
  write_png(path, scaled);
}

Image read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open raw image: " + path);
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  int m = 0, n = 0, c = 0;
  if (!(hs >> m >> n >> c) || m <= 0 || n <= 0 || c <= 0) throw ConfigError("bad raw header: " + path);
  Image out(m, n, c);
  std::vector<unsigned char> bytes(std::size_t(m) * n * c * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  if (in.gcount() != std::streamsize(bytes.size())) throw ConfigError("truncated raw image: " + path);
  std::size_t pos = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < c; ++k, pos += 4) {
        std::uint32_t u = std::uint32_t(bytes[pos]) | std::uint32_t(bytes[pos + 1]) << 8 |
                          std::uint32_t(bytes[pos + 2]) << 16 | std::uint32_t(bytes[pos + 3]) << 24;
        out(i, j, k) = std::bit_cast<float>(u);
      }
  return out;
}

void write_raw(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << image.rows() << ' ' << image.cols() << ' ' << image.channels() << '\n';
  std::vector<unsigned char> bytes;
  bytes.reserve(image.size() * 4);
  for (int i = 0; i < image.rows(); ++i)
    for (int j = 0; j < image.cols(); ++j)
      for (int k = 0; k < image.channels(); ++k) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(image(i, j, k)));
        for (int s = 0; s < 4; ++s) bytes.push_back(static_cast<unsigned char>(u >> (8 * s)));
      }
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Image read_image(const std::string& path) {
  return ends_with(path, ".png") ? read_png(path) : read_raw(path);
}

SupportMask read_mask(const std::string& path) {
  return SupportMask::nonzero(read_image(path), 0.5 / 255.0);
}

}  // namespace invreg
