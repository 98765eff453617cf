#include "deanet/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "deanet/error.hpp"

namespace deanet {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open file: " + path.string());
  return f;
}

// libpng reports errors through longjmp; the reader/writer wrappers keep the
// png structs alive only inside functions that use setjmp directly.
struct ReadContext {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~ReadContext() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct WriteContext {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~WriteContext() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void check_signature(std::FILE* f, const std::filesystem::path& path) {
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
}

}  // namespace

PngInfo read_png_info(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  check_signature(f.get(), path);
  ReadContext ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
  if (!ctx.info) throw DataError("libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("corrupt PNG header: " + path.string());
  png_init_io(ctx.png, f.get());
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);
  PngInfo info;
  info.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  info.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  info.bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  return info;
}

Image read_png(const std::filesystem::path& path) {
  auto f = open_file(path, "rb");
  check_signature(f.get(), path);
  ReadContext ctx;
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
  if (!ctx.info) throw DataError("libpng init failed for " + path.string());

  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  int width = 0, height = 0, bit_depth = 0;
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("corrupt PNG: " + path.string());
  png_init_io(ctx.png, f.get());
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const int color_type = png_get_color_type(ctx.png, ctx.info);
  bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(ctx.png);
  png_set_strip_alpha(ctx.png);
  if (bit_depth < 8) bit_depth = 8;
  if (bit_depth == 16) png_set_swap(ctx.png);  // host little-endian uint16
  png_read_update_info(ctx.png, ctx.info);

  width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  const std::size_t rowbytes = png_get_rowbytes(ctx.png, ctx.info);
  buffer.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  if (png_get_channels(ctx.png, ctx.info) != 3) throw DataError("unsupported PNG layout: " + path.string());
  Image img(height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (bit_depth == 16) {
          std::uint16_t v;
          std::memcpy(&v, rows[y] + (x * 3 + c) * 2, 2);
          img.at(c, y, x) = v / 65535.0;
        } else {
          img.at(c, y, x) = rows[y][x * 3 + c] / 255.0;
        }
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw ShapeError("write_png: expected 1 or 3 channels, got " + std::to_string(img.channels()));
  }
  const int channels = img.channels();
  std::vector<png_byte> buffer(static_cast<std::size_t>(img.width()) * img.height() * channels);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        buffer[(static_cast<std::size_t>(y) * img.width() + x) * channels + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
  std::vector<png_bytep> rows(img.height());
  for (int y = 0; y < img.height(); ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * img.width() * channels;

  auto f = open_file(path, "wb");
  WriteContext ctx;
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
  if (!ctx.info) throw DataError("libpng init failed for " + path.string());
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("failed writing PNG: " + path.string());
  png_init_io(ctx.png, f.get());
  png_set_IHDR(ctx.png, ctx.info, img.width(), img.height(), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

}  // namespace deanet
