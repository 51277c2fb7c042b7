#pragma once

// Data-parallel raster kernels. Each kernel in `ki67::kernels` has a
// straightforward serial counterpart in `ki67::kernels::reference` that the
// tests compare against bit-for-bit and the benchmark times side by side.

#include <cstdint>
#include <vector>

#include "ki67/raster.hpp"

namespace ki67 {

// Offsets of a structuring element stored as horizontal runs, one per row.
class StructuringElement {
 public:
  struct Run {
    int dy;
    int dx_min;
    int dx_max;
  };

  // Pixels with (dx/a)^2 + (dy/b)^2 <= 1. a = b = 1 gives the 3x3 cross,
  // a = b = 0 the single center pixel.
  static StructuringElement ellipse(int semi_x, int semi_y);
  static StructuringElement disc(int radius) { return ellipse(radius, radius); }

  const std::vector<Run>& runs() const noexcept { return runs_; }
  std::vector<Point> offsets() const;
  int reach_x() const noexcept { return reach_x_; }
  int reach_y() const noexcept { return reach_y_; }

 private:
  std::vector<Run> runs_;
  int reach_x_ = 0;
  int reach_y_ = 0;
};

// Integer index into [0, n) for a mirror-padded signal (edge sample repeated:
// ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...). Valid for any offset.
inline int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

namespace kernels {

// Sum over the window x window neighborhood with mirror padding.
Grid<std::int64_t> window_sums(const Grid<std::int64_t>& values, int window);

// Pixels outside the image count as `border_value` for erosion and as
// background for dilation.
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se,
                 bool border_value);
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);

// Squared Euclidean distance from each foreground pixel to the nearest
// background pixel; everything outside the image is background.
Grid<std::int64_t> squared_distance_transform(const BinaryMask& mask);

Grid<double> distance_transform(const BinaryMask& mask);

namespace reference {

Grid<std::int64_t> window_sums(const Grid<std::int64_t>& values, int window);
BinaryMask erode(const BinaryMask& mask, const StructuringElement& se,
                 bool border_value);
BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se);
Grid<std::int64_t> squared_distance_transform(const BinaryMask& mask);

}  // namespace reference
}  // namespace kernels
}  // namespace ki67
