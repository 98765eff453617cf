#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace deanet {

/// Planar H x W x C image of doubles, nominally in [0, 1].
///
/// Storage is channel-major (all of channel 0, then channel 1, ...), which
/// matches the NCHW layout of Tensor so conversions are plain copies.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0);
  Image(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  double at(int c, int y, int x) const { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }

  std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  std::string shape_string() const;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

// Throws ShapeError naming `what` when a and b differ in shape.
void require_same_shape(const Image& a, const Image& b, const std::string& what);

/// Rec.601 luma (0.299 R + 0.587 G + 0.114 B). Single-channel input is
/// returned unchanged.
Image luma(const Image& rgb);

Image add(const Image& a, const Image& b);
Image subtract(const Image& a, const Image& b);
Image clamp01(const Image& img);

Image crop(const Image& img, int y0, int x0, int height, int width);
Image flip_horizontal(const Image& img);
// Replicate-pads on the bottom/right so the result is height x width.
Image pad_replicate(const Image& img, int height, int width);
// Extracts channel range [first, first + count).
Image channel_slice(const Image& img, int first, int count);

}  // namespace deanet
