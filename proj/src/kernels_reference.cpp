#include <algorithm>
#include <limits>

#include "ki67/kernels.hpp"

namespace ki67::kernels::reference {

Grid<std::int64_t> window_sums(const Grid<std::int64_t>& values, int window) {
  const int w = values.width();
  const int h = values.height();
  const int half = window / 2;
  Grid<std::int64_t> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::int64_t sum = 0;
      for (int dy = -half; dy <= half; ++dy) {
        const int sy = mirror_index(y + dy, h);
        for (int dx = -half; dx <= half; ++dx) {
          sum += values(mirror_index(x + dx, w), sy);
        }
      }
      out(x, y) = sum;
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se,
                 bool border_value) {
  const auto offsets = se.offsets();
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool keep = true;
      for (const auto& o : offsets) {
        const int sx = x + o.x;
        const int sy = y + o.y;
        const bool v = mask.contains(sx, sy) ? mask(sx, sy) != 0 : border_value;
        if (!v) {
          keep = false;
          break;
        }
      }
      out(x, y) = keep;
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  const auto offsets = se.offsets();
  BinaryMask out(mask.width(), mask.height());
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      bool hit = false;
      for (const auto& o : offsets) {
        // Reflected element; the library's elements are symmetric anyway.
        const int sx = x - o.x;
        const int sy = y - o.y;
        if (mask.contains(sx, sy) && mask(sx, sy)) {
          hit = true;
          break;
        }
      }
      out(x, y) = hit;
    }
  }
  return out;
}

Grid<std::int64_t> squared_distance_transform(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<Point> background;
  // The one-pixel frame outside the image is background.
  for (int x = -1; x <= w; ++x) {
    background.push_back({x, -1});
    background.push_back({x, h});
  }
  for (int y = 0; y < h; ++y) {
    background.push_back({-1, y});
    background.push_back({w, y});
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) background.push_back({x, y});
    }
  }
  Grid<std::int64_t> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      std::int64_t best = std::numeric_limits<std::int64_t>::max();
      for (const auto& b : background) {
        const std::int64_t dx = b.x - x;
        const std::int64_t dy = b.y - y;
        best = std::min(best, dx * dx + dy * dy);
      }
      out(x, y) = best;
    }
  }
  return out;
}

}  // namespace ki67::kernels::reference
