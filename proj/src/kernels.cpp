#include "ki67/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace ki67 {

StructuringElement StructuringElement::ellipse(int semi_x, int semi_y) {
  if (semi_x < 0 || semi_y < 0) {
    fail(ErrorKind::Usage, "structuring element axes must be non-negative");
  }
  StructuringElement se;
  se.reach_x_ = semi_x;
  se.reach_y_ = semi_y;
  if (semi_x == 0 || semi_y == 0) {
    // Degenerate ellipse: a line along the non-zero axis.
    if (semi_y == 0) {
      se.runs_.push_back({0, -semi_x, semi_x});
    } else {
      for (int dy = -semi_y; dy <= semi_y; ++dy) se.runs_.push_back({dy, 0, 0});
    }
    return se;
  }
  const long long a2 = static_cast<long long>(semi_x) * semi_x;
  const long long b2 = static_cast<long long>(semi_y) * semi_y;
  for (int dy = -semi_y; dy <= semi_y; ++dy) {
    // Largest dx with dx^2 b^2 + dy^2 a^2 <= a^2 b^2.
    int dx = semi_x;
    while (dx > 0 && dx * dx * b2 + static_cast<long long>(dy) * dy * a2 > a2 * b2) --dx;
    se.runs_.push_back({dy, -dx, dx});
  }
  return se;
}

std::vector<Point> StructuringElement::offsets() const {
  std::vector<Point> out;
  for (const auto& r : runs_) {
    for (int dx = r.dx_min; dx <= r.dx_max; ++dx) out.push_back({dx, r.dy});
  }
  return out;
}

namespace kernels {

Grid<std::int64_t> window_sums(const Grid<std::int64_t>& values, int window) {
  const int w = values.width();
  const int h = values.height();
  const int half = window / 2;
  const int pw = w + 2 * half;
  const int ph = h + 2 * half;
  // Integral image of the mirror-padded input, with a leading zero row/column.
  Grid<std::int64_t> integral(pw + 1, ph + 1);

#pragma omp parallel for schedule(static)
  for (int py = 0; py < ph; ++py) {
    const int sy = mirror_index(py - half, h);
    std::int64_t acc = 0;
    for (int px = 0; px < pw; ++px) {
      acc += values(mirror_index(px - half, w), sy);
      integral(px + 1, py + 1) = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int px = 1; px <= pw; ++px) {
    for (int py = 1; py <= ph; ++py) integral(px, py) += integral(px, py - 1);
  }

  Grid<std::int64_t> out(w, h);
  const int span = 2 * half + 1;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Window over padded coordinates [x, x + span) x [y, y + span).
      out(x, y) = integral(x + span, y + span) - integral(x, y + span) -
                  integral(x + span, y) + integral(x, y);
    }
  }
  return out;
}

namespace {

// Per-row prefix counts of pixels equal to `value`; entry x counts [0, x).
Grid<int> row_prefix_counts(const BinaryMask& mask, bool value) {
  Grid<int> counts(mask.width() + 1, mask.height());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < mask.height(); ++y) {
    int acc = 0;
    for (int x = 0; x < mask.width(); ++x) {
      acc += (mask(x, y) != 0) == value;
      counts(x + 1, y) = acc;
    }
  }
  return counts;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, const StructuringElement& se,
                 bool border_value) {
  const int w = mask.width();
  const int h = mask.height();
  const auto zeros = row_prefix_counts(mask, false);
  BinaryMask out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool keep = true;
      for (const auto& run : se.runs()) {
        const int sy = y + run.dy;
        const int x0 = x + run.dx_min;
        const int x1 = x + run.dx_max;
        if (sy < 0 || sy >= h) {
          keep = border_value;
        } else if ((x0 < 0 || x1 >= w) && !border_value) {
          keep = false;
        } else {
          const int a = std::max(x0, 0);
          const int b = std::min(x1, w - 1);
          keep = a > b || zeros(b + 1, sy) - zeros(a, sy) == 0;
        }
        if (!keep) break;
      }
      out(x, y) = keep;
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, const StructuringElement& se) {
  const int w = mask.width();
  const int h = mask.height();
  const auto ones = row_prefix_counts(mask, true);
  BinaryMask out(w, h);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool hit = false;
      for (const auto& run : se.runs()) {
        const int sy = y - run.dy;
        if (sy < 0 || sy >= h) continue;
        const int a = std::max(x - run.dx_max, 0);
        const int b = std::min(x - run.dx_min, w - 1);
        if (a <= b && ones(b + 1, sy) - ones(a, sy) > 0) {
          hit = true;
          break;
        }
      }
      out(x, y) = hit;
    }
  }
  return out;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

// Meijster, Roerdink & Hesselink linear-time exact EDT on the image framed by
// one background pixel on every side.
Grid<std::int64_t> squared_distance_transform(const BinaryMask& mask) {
  const int w = mask.width() + 2;
  const int h = mask.height() + 2;
  auto inside = [&](int px, int py) {
    return px > 0 && py > 0 && px < w - 1 && py < h - 1 && mask(px - 1, py - 1);
  };

  // Vertical distance to the nearest background pixel in the same column.
  Grid<std::int64_t> g(w, h);
#pragma omp parallel for schedule(static)
  for (int x = 0; x < w; ++x) {
    g(x, 0) = inside(x, 0) ? h + w : 0;
    for (int y = 1; y < h; ++y) g(x, y) = inside(x, y) ? g(x, y - 1) + 1 : 0;
    for (int y = h - 2; y >= 0; --y) {
      if (g(x, y + 1) < g(x, y)) g(x, y) = g(x, y + 1) + 1;
    }
  }

  Grid<std::int64_t> out(mask.width(), mask.height());
#pragma omp parallel
  {
    std::vector<std::int64_t> s(w);
    std::vector<std::int64_t> t(w);
#pragma omp for schedule(static)
    for (int y = 1; y < h - 1; ++y) {
      auto f = [&](std::int64_t x, std::int64_t i) {
        const std::int64_t gi = g(static_cast<int>(i), y);
        return (x - i) * (x - i) + gi * gi;
      };
      auto sep = [&](std::int64_t i, std::int64_t u) {
        const std::int64_t gi = g(static_cast<int>(i), y);
        const std::int64_t gu = g(static_cast<int>(u), y);
        return floor_div(u * u - i * i + gu * gu - gi * gi, 2 * (u - i));
      };
      int q = 0;
      s[0] = 0;
      t[0] = 0;
      for (int u = 1; u < w; ++u) {
        while (q >= 0 && f(t[q], s[q]) > f(t[q], u)) --q;
        if (q < 0) {
          q = 0;
          s[0] = u;
        } else {
          const std::int64_t next = 1 + sep(s[q], u);
          if (next < w) {
            ++q;
            s[q] = u;
            t[q] = next;
          }
        }
      }
      for (int u = w - 1; u >= 0; --u) {
        if (u > 0 && u < w - 1) out(u - 1, y - 1) = f(u, s[q]);
        if (u == t[q]) --q;
      }
    }
  }
  return out;
}

Grid<double> distance_transform(const BinaryMask& mask) {
  const auto sq = squared_distance_transform(mask);
  Grid<double> out(mask.width(), mask.height());
#pragma omp parallel for schedule(static)
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      out(x, y) = std::sqrt(static_cast<double>(sq(x, y)));
    }
  }
  return out;
}

}  // namespace kernels
}  // namespace ki67
