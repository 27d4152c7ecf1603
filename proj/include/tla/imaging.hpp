#pragma once

#include "tla/numerics.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace tla {

/// Dense image with values in [0,1].
///
/// Pixels are stored planar: `data()` is channels x (height*width) with the
/// column index y*width + x. This is the same layout the convolutional
/// network consumes, so an image feeds forward without reshuffling.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels);
  Image(int height, int width, int channels, Matrix data);

  static Image constant(int height, int width, int channels, double value);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  bool empty() const { return height_ == 0 || width_ == 0; }

  double at(int y, int x, int c) const { return data_(c, static_cast<Eigen::Index>(y) * width_ + x); }
  double& at(int y, int x, int c) { return data_(c, static_cast<Eigen::Index>(y) * width_ + x); }

  const Matrix& data() const { return data_; }

  /// Clamps every value into [0,1]; used by generators after drawing.
  void clamp_values();

  friend bool operator==(const Image& a, const Image& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.channels_ == b.channels_ &&
           a.data_ == b.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Matrix data_;
};

/// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Box {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  int area() const { return w * h; }
  bool inside(int image_height, int image_width) const {
    return x >= 0 && y >= 0 && w >= 1 && h >= 1 && x + w <= image_width && y + h <= image_height;
  }
  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;
};

/// Intersection over union of two boxes.
double iou(const Box& a, const Box& b);

/// Smallest box covering both inputs.
Box box_union(const Box& a, const Box& b);

/// Raised by the PPM/PGM reader; carries the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Binary PPM (P6) or PGM (P5), maxval 255.
Image read_ppm(std::span<const std::uint8_t> bytes);
/// Writes P6 for three channels and P5 for one, with single-space separators.
std::vector<std::uint8_t> write_ppm(const Image& img);

Image read_ppm_file(const std::string& path);
void write_ppm_file(const std::string& path, const Image& img);

Image crop(const Image& img, const Box& box);

/// Bilinear resampling with align-corners sampling and edge clamping.
Image resize_bilinear(const Image& img, int out_height, int out_width);

/// Crop followed by an anisotropic resize to the requested size.
Image warp(const Image& img, const Box& box, int out_height, int out_width);

Image hflip(const Image& img);

/// Center, top-left, top-right, bottom-left, bottom-right crops of size
/// crop x crop, followed by the horizontal reflection of each.
std::vector<Image> ten_views(const Image& img, int crop_size);

}  // namespace tla
