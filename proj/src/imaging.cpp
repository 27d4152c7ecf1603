#include "tla/imaging.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace tla {

Image::Image(int height, int width, int channels)
    : Image(height, width, channels,
            Matrix::Zero(channels, static_cast<Eigen::Index>(height) * width)) {}

Image::Image(int height, int width, int channels, Matrix data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height < 1 || width < 1) throw Error("image dimensions must be positive");
  if (channels != 1 && channels != 3) throw Error("image must have 1 or 3 channels");
  if (data_.rows() != channels || data_.cols() != static_cast<Eigen::Index>(height) * width)
    throw Error("image data does not match its dimensions");
  if (!data_.allFinite() || data_.minCoeff() < 0.0 || data_.maxCoeff() > 1.0)
    throw Error("image values must lie in [0,1]");
}

Image Image::constant(int height, int width, int channels, double value) {
  return Image(height, width, channels,
               Matrix::Constant(channels, static_cast<Eigen::Index>(height) * width, value));
}

void Image::clamp_values() { data_ = data_.cwiseMax(0.0).cwiseMin(1.0); }

double iou(const Box& a, const Box& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.x + a.w, b.x + b.w);
  const int y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = static_cast<double>(std::max(0, x1 - x0)) * std::max(0, y1 - y0);
  return inter / (static_cast<double>(a.area()) + b.area() - inter);
}

Box box_union(const Box& a, const Box& b) {
  const int x0 = std::min(a.x, b.x);
  const int y0 = std::min(a.y, b.y);
  const int x1 = std::max(a.x + a.w, b.x + b.w);
  const int y1 = std::max(a.y + a.h, b.y + b.h);
  return {x0, y0, x1 - x0, y1 - y0};
}

ParseError::ParseError(const std::string& what, std::size_t offset)
    : Error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_separators() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  int number() {
    skip_separators();
    const std::size_t start = last_start_ = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw ParseError("header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError("expected a decimal header value", start);
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  /// Offset of the token most recently read by number().
  std::size_t last_start() const { return last_start_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::size_t last_start_ = 0;
};

}  // namespace

Image read_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("expected magic P5 or P6", 0);
  const int channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader reader(bytes);
  reader.advance(2);
  const int width = reader.number();
  const std::size_t width_at = reader.last_start();
  const int height = reader.number();
  const std::size_t height_at = reader.last_start();
  const int maxval = reader.number();
  const std::size_t maxval_at = reader.last_start();
  if (width < 1) throw ParseError("image dimensions must be positive", width_at);
  if (height < 1) throw ParseError("image dimensions must be positive", height_at);
  if (maxval != 255) throw ParseError("only maxval 255 is supported", maxval_at);
  if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()]))
    throw ParseError("expected whitespace after maxval", reader.pos());
  reader.advance(1);

  const std::size_t payload = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - reader.pos() < payload)
    throw ParseError("truncated pixel payload", bytes.size());

  Matrix data(channels, static_cast<Eigen::Index>(width) * height);
  const std::uint8_t* p = bytes.data() + reader.pos();
  for (Eigen::Index i = 0; i < data.cols(); ++i)
    for (int c = 0; c < channels; ++c) data(c, i) = *p++ / 255.0;
  return Image(height, width, channels, std::move(data));
}

std::vector<std::uint8_t> write_ppm(const Image& img) {
  if (img.empty()) throw Error("cannot write an empty image");
  const std::string header = std::string(img.channels() == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + static_cast<std::size_t>(img.data().size()));
  for (Eigen::Index i = 0; i < img.data().cols(); ++i)
    for (int c = 0; c < img.channels(); ++c)
      out.push_back(static_cast<std::uint8_t>(std::lround(img.data()(c, i) * 255.0)));
  return out;
}

Image read_ppm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return read_ppm(bytes);
}

void write_ppm_file(const std::string& path, const Image& img) {
  const auto bytes = write_ppm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image crop(const Image& img, const Box& box) {
  if (!box.inside(img.height(), img.width())) throw Error("crop box outside image");
  Matrix data(img.channels(), static_cast<Eigen::Index>(box.w) * box.h);
  for (int y = 0; y < box.h; ++y)
    data.middleCols(static_cast<Eigen::Index>(y) * box.w, box.w) =
        img.data().middleCols(static_cast<Eigen::Index>(box.y + y) * img.width() + box.x, box.w);
  return Image(box.h, box.w, img.channels(), std::move(data));
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> sample_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    const double pos = dst > 1 ? static_cast<double>(i) * (src - 1) / (dst - 1) : (src - 1) / 2.0;
    const int lo = std::clamp(static_cast<int>(std::floor(pos)), 0, src - 1);
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, pos - lo};
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& img, int out_height, int out_width) {
  if (out_height < 1 || out_width < 1) throw Error("resize: output dimensions must be positive");
  if (img.empty()) throw Error("resize: empty image");
  if (out_height == img.height() && out_width == img.width()) return img;
  const auto ys = sample_taps(img.height(), out_height);
  const auto xs = sample_taps(img.width(), out_width);
  Matrix data(img.channels(), static_cast<Eigen::Index>(out_height) * out_width);
  for (int y = 0; y < out_height; ++y) {
    const Tap ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const Tap tx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < img.channels(); ++c) {
        const double top = (1.0 - tx.frac) * img.at(ty.lo, tx.lo, c) + tx.frac * img.at(ty.lo, tx.hi, c);
        const double bottom = (1.0 - tx.frac) * img.at(ty.hi, tx.lo, c) + tx.frac * img.at(ty.hi, tx.hi, c);
        data(c, static_cast<Eigen::Index>(y) * out_width + x) = (1.0 - ty.frac) * top + ty.frac * bottom;
      }
    }
  }
  // Interpolation weights are convex; clamp away last-ulp overshoot.
  return Image(out_height, out_width, img.channels(), data.cwiseMax(0.0).cwiseMin(1.0));
}

Image warp(const Image& img, const Box& box, int out_height, int out_width) {
  return resize_bilinear(crop(img, box), out_height, out_width);
}

Image hflip(const Image& img) {
  Matrix data(img.channels(), img.data().cols());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      data.col(static_cast<Eigen::Index>(y) * img.width() + x) =
          img.data().col(static_cast<Eigen::Index>(y) * img.width() + (img.width() - 1 - x));
  return Image(img.height(), img.width(), img.channels(), std::move(data));
}

std::vector<Image> ten_views(const Image& img, int crop_size) {
  if (crop_size < 1 || crop_size > img.height() || crop_size > img.width())
    throw Error("ten_views: crop larger than image");
  const int right = img.width() - crop_size;
  const int bottom = img.height() - crop_size;
  const Box boxes[5] = {{right / 2, bottom / 2, crop_size, crop_size},
                        {0, 0, crop_size, crop_size},
                        {right, 0, crop_size, crop_size},
                        {0, bottom, crop_size, crop_size},
                        {right, bottom, crop_size, crop_size}};
  std::vector<Image> views;
  views.reserve(10);
  for (const Box& b : boxes) views.push_back(crop(img, b));
  for (int i = 0; i < 5; ++i) views.push_back(hflip(views[static_cast<std::size_t>(i)]));
  return views;
}

}  // namespace tla
