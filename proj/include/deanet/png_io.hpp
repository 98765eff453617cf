#pragma once

#include <filesystem>

#include "deanet/image.hpp"

namespace deanet {

struct PngInfo {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
};

// Reads only the header. Throws DataError naming the file when it is not a
// readable PNG.
PngInfo read_png_info(const std::filesystem::path& path);

// Decodes any PNG to a 3-channel RGB image in [0,1]. 8-bit samples map as
// v/255 and 16-bit samples as v/65535; gray is replicated, alpha dropped.
Image read_png(const std::filesystem::path& path);

// Writes 8-bit PNG (gray for 1 channel, RGB for 3). Values are clamped to
// [0,1] and rounded to nearest.
void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace deanet
