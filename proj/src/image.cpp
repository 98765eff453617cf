#include "deanet/image.hpp"

#include <algorithm>
#include <sstream>

#include "deanet/error.hpp"

namespace deanet {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels),
      data_(static_cast<std::size_t>(height) * width * channels, fill) {
  if (height < 0 || width < 0 || channels < 0) throw ShapeError("image dimensions must be non-negative");
}

Image::Image(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("image data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string());
  }
}

std::string Image::shape_string() const {
  std::ostringstream os;
  os << height_ << "x" << width_ << "x" << channels_;
  return os.str();
}

void require_same_shape(const Image& a, const Image& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw ShapeError(what + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

Image luma(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  if (rgb.channels() != 3) throw ShapeError("luma: expected 1 or 3 channels, got " + std::to_string(rgb.channels()));
  Image out(rgb.height(), rgb.width(), 1);
  auto r = rgb.plane(0), g = rgb.plane(1), b = rgb.plane(2);
  auto y = out.plane(0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

Image add(const Image& a, const Image& b) {
  require_same_shape(a, b, "add");
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Image subtract(const Image& a, const Image& b) {
  require_same_shape(a, b, "subtract");
  Image out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Image clamp01(const Image& img) {
  Image out = img;
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image crop(const Image& img, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > img.height() || x0 + width > img.width()) {
    throw ShapeError("crop window " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                     std::to_string(y0) + "," + std::to_string(x0) + ") exceeds image " + img.shape_string());
  }
  Image out(height, width, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width(), img.channels());
  const int w = img.width();
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y, w - 1 - x);
  return out;
}

Image pad_replicate(const Image& img, int height, int width) {
  if (height < img.height() || width < img.width()) throw ShapeError("pad_replicate: target smaller than image");
  if (img.empty()) throw ShapeError("pad_replicate: empty image");
  Image out(height, width, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < height; ++y) {
      const int sy = std::min(y, img.height() - 1);
      for (int x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, sy, std::min(x, img.width() - 1));
    }
  return out;
}

Image channel_slice(const Image& img, int first, int count) {
  if (first < 0 || count < 0 || first + count > img.channels()) throw ShapeError("channel_slice: range out of bounds");
  std::vector<double> data(img.data().begin() + first * img.plane_size(),
                           img.data().begin() + (first + count) * img.plane_size());
  return Image(img.height(), img.width(), count, std::move(data));
}

}  // namespace deanet
