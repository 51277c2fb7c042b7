#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ki67/error.hpp"

namespace ki67 {

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Row-major single-channel grid with top-left origin, y growing downward.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width, height)), fill) {}
  Grid(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (static_cast<long long>(data_.size()) != checked(width, height)) {
      fail(ErrorKind::Processing, "grid data length does not match dimensions");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> row(int y) noexcept {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + index(0, y), static_cast<std::size_t>(width_)};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool same_shape(const auto& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static long long checked(int width, int height) {
    if (width < 0 || height < 0) {
      fail(ErrorKind::Processing, "negative grid dimensions");
    }
    return static_cast<long long>(width) * height;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

// Per-pixel nucleus probability in [0,1].
using ProbabilityMap = Grid<double>;
// Foreground flag per pixel, 0 or 1.
using BinaryMask = Grid<std::uint8_t>;
// 0 = background, k >= 1 = instance k.
using LabelMap = Grid<std::int32_t>;

// Interleaved 8-bit or 16-bit raster with 1 or 3 channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> data;

  std::uint16_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint16_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  int max_value() const { return bit_depth == 16 ? 65535 : 255; }

  static RasterImage blank(int width, int height, int channels, int bit_depth,
                           std::uint16_t fill = 0);
};

RasterImage load_image(const std::filesystem::path& path);

// 8-bit gray/RGB or 16-bit gray, depending on the image's fields.
void save_image(const RasterImage& image, const std::filesystem::path& path);

// 16-bit grayscale PNG; max label must fit in 16 bits.
void save_label_map(const LabelMap& labels, const std::filesystem::path& path);

LabelMap to_label_map(const RasterImage& image);

ProbabilityMap to_probability(const RasterImage& image);

// Quantizes to 8 bits (round(p * 255)) for storage.
RasterImage from_probability(const ProbabilityMap& prob);

RasterImage mask_to_image(const BinaryMask& mask);
BinaryMask image_to_mask(const RasterImage& image);

BinaryMask foreground(const LabelMap& labels);

int max_label(const LabelMap& labels);

// Renumbers positive labels to 1..K ordered by first raster-scan pixel.
LabelMap relabel_sequential(const LabelMap& labels);

}  // namespace ki67
