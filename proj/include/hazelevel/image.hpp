#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hazelevel {

// Bad input: unreadable files, malformed records, invalid parameters.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Internal invariant broken. Indicates a bug rather than bad input.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Row-major H x W grid of finite reals. Houses transmission, depth and the
// intermediate matrices of the estimator.
class ScalarMap {
 public:
  ScalarMap(int width, int height, double fill = 0.0)
      : width_(width), height_(height) {
    check_dims(width, height);
    if (!std::isfinite(fill)) throw Error("ScalarMap: non-finite fill value");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  ScalarMap(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    check_dims(width, height);
    if (data_.size() != static_cast<std::size_t>(width) * height)
      throw Error("ScalarMap: data length does not match " + std::to_string(width) + "x" +
                  std::to_string(height));
    for (double v : data_)
      if (!std::isfinite(v)) throw Error("ScalarMap: non-finite value");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  double& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }

  std::span<const double> values() const& noexcept { return data_; }
  std::span<double> values() & noexcept { return data_; }
  // A span into a temporary would dangle.
  std::span<const double> values() const&& = delete;

  bool same_shape(const ScalarMap& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double max() const { return *std::max_element(data_.begin(), data_.end()); }

  friend bool operator==(const ScalarMap&, const ScalarMap&) = default;

 private:
  static void check_dims(int width, int height) {
    if (width < 1 || height < 1)
      throw Error("ScalarMap: dimensions must be at least 1x1, got " + std::to_string(width) +
                  "x" + std::to_string(height));
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_;
  int height_;
  std::vector<double> data_;
};

using TransmissionMap = ScalarMap;

// Pixel intensities in [0,1], interleaved channels (1 = gray, 3 = RGB).
class RasterImage {
 public:
  RasterImage(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    check_shape(width, height, channels);
    if (!(fill >= 0.0 && fill <= 1.0)) throw Error("RasterImage: fill outside [0,1]");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  RasterImage(int width, int height, int channels, std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_shape(width, height, channels);
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
      throw Error("RasterImage: data length does not match shape");
    for (double v : data_)
      if (!(v >= 0.0 && v <= 1.0)) throw Error("RasterImage: intensity outside [0,1]");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  double at(int x, int y, int c) const noexcept { return data_[offset(x, y) + c]; }
  double& at(int x, int y, int c) noexcept { return data_[offset(x, y) + c]; }

  // Channel c of the pixel with row-major index i. Single-channel images
  // answer every c with their only channel.
  double sample(std::size_t i, int c) const noexcept {
    return channels_ == 1 ? data_[i] : data_[i * 3 + c];
  }

  std::span<const double> values() const& noexcept { return data_; }
  std::span<double> values() & noexcept { return data_; }
  // A span into a temporary would dangle.
  std::span<const double> values() const&& = delete;

  // 3-channel copy; gray inputs are replicated into every channel.
  RasterImage to_rgb() const {
    if (channels_ == 3) return *this;
    std::vector<double> rgb(pixel_count() * 3);
    for (std::size_t i = 0; i < pixel_count(); ++i) rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = data_[i];
    return RasterImage(width_, height_, 3, std::move(rgb));
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  static void check_shape(int width, int height, int channels) {
    if (width < 1 || height < 1) throw Error("RasterImage: zero-sized image");
    if (channels != 1 && channels != 3)
      throw Error("RasterImage: channels must be 1 or 3, got " + std::to_string(channels));
  }
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int width_;
  int height_;
  int channels_;
  std::vector<double> data_;
};

// Scene distances, nonnegative and capped at d_max. Negative or non-finite
// raw entries mean "unknown / infinitely far" and become d_max.
class DepthMap {
 public:
  DepthMap(int width, int height, std::vector<double> raw, double d_max)
      : map_(width, height, sanitize(std::move(raw), d_max)), d_max_(d_max) {}

  DepthMap(const ScalarMap& raw, double d_max)
      : DepthMap(raw.width(), raw.height(), std::vector<double>(raw.values().begin(), raw.values().end()),
                 d_max) {}

  int width() const noexcept { return map_.width(); }
  int height() const noexcept { return map_.height(); }
  double d_max() const noexcept { return d_max_; }
  const ScalarMap& map() const& noexcept { return map_; }
  ScalarMap map() && { return std::move(map_); }
  double operator()(int x, int y) const noexcept { return map_(x, y); }
  double operator[](std::size_t i) const noexcept { return map_[i]; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  static std::vector<double> sanitize(std::vector<double> raw, double d_max) {
    if (!(d_max > 0.0) || !std::isfinite(d_max)) throw Error("DepthMap: d_max must be positive and finite");
    for (double& v : raw) {
      if (!std::isfinite(v) || v < 0.0) v = d_max;
      v = std::min(v, d_max);
    }
    return raw;
  }

  ScalarMap map_;
  double d_max_;
};

// Channel mean, used as the guidance signal for refinement and baselines.
inline ScalarMap grayscale(const RasterImage& image) {
  ScalarMap gray(image.width(), image.height());
  const int c = image.channels();
  auto src = image.values();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += src[i * c + k];
    gray[i] = s / c;
  }
  return gray;
}

}  // namespace hazelevel
