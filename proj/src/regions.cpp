#include "ki67/regions.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>

namespace ki67 {

namespace {

class DisjointSet {
 public:
  int make() {
    parent_.push_back(static_cast<int>(parent_.size()));
    return parent_.back();
  }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<int> parent_;
};

// Two-pass 8-connected labeling; `same(i, j)` decides whether two
// foreground pixels (flat indices) may join.
template <typename Fg, typename Same>
LabelMap label_8(int w, int h, Fg fg, Same same) {
  LabelMap provisional(w, h);
  DisjointSet sets;
  sets.make();  // 0 = background
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!fg(i)) continue;
      int label = 0;
      // Already-visited neighbours: W, NW, N, NE.
      const int nx[4] = {x - 1, x - 1, x, x + 1};
      const int ny[4] = {y, y - 1, y - 1, y - 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w) continue;
        const std::size_t j = static_cast<std::size_t>(ny[k]) * w + nx[k];
        const int other = provisional[j];
        if (other == 0 || !same(i, j)) continue;
        if (label == 0) {
          label = other;
        } else {
          sets.unite(label, other);
        }
      }
      provisional[i] = label != 0 ? label : sets.make();
    }
  }
  // Final ids in order of each component's first raster pixel.
  std::vector<int> final_id;
  LabelMap out(w, h);
  int next = 0;
  for (std::size_t i = 0; i < provisional.size(); ++i) {
    const int p = provisional[i];
    if (p == 0) continue;
    const int root = sets.find(p);
    if (final_id.size() <= static_cast<std::size_t>(root)) final_id.resize(root + 1, 0);
    if (final_id[root] == 0) final_id[root] = ++next;
    out[i] = final_id[root];
  }
  return out;
}

// Clockwise neighbourhood starting west (y grows downward).
constexpr int kDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

int direction_of(int dx, int dy) {
  for (int d = 0; d < 8; ++d) {
    if (kDx[d] == dx && kDy[d] == dy) return d;
  }
  return -1;
}

long long cross(const Point& o, const Point& a, const Point& b) {
  return static_cast<long long>(a.x - o.x) * (b.y - o.y) -
         static_cast<long long>(a.y - o.y) * (b.x - o.x);
}

}  // namespace

LabelMap connected_components(const BinaryMask& mask) {
  return label_8(
      mask.width(), mask.height(), [&](std::size_t i) { return mask[i] != 0; },
      [](std::size_t, std::size_t) { return true; });
}

LabelMap label_components(const LabelMap& labels) {
  return label_8(
      labels.width(), labels.height(), [&](std::size_t i) { return labels[i] > 0; },
      [&](std::size_t i, std::size_t j) { return labels[i] == labels[j]; });
}

BinaryMask Region::patch(int pad) const {
  BinaryMask out(bbox.width() + 2 * pad, bbox.height() + 2 * pad);
  for (const auto& p : pixels) out(p.x - bbox.x0 + pad, p.y - bbox.y0 + pad) = 1;
  return out;
}

std::vector<Point> trace_contour(const BinaryMask& mask, Point start) {
  std::vector<Point> contour{start};
  auto fg = [&](int x, int y) { return mask.contains(x, y) && mask(x, y) != 0; };

  Point current = start;
  int backtrack = 0;  // west of the first raster pixel
  const std::size_t limit = 8 * mask.size() + 8;
  for (std::size_t step = 0; step < limit; ++step) {
    int found = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (backtrack + i) % 8;
      if (fg(current.x + kDx[d], current.y + kDy[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) return contour;  // isolated pixel

    const int prev = (found + 7) % 8;
    const Point behind{current.x + kDx[prev], current.y + kDy[prev]};
    const Point next{current.x + kDx[found], current.y + kDy[found]};
    // Back at the start and about to repeat the first move.
    if (current == start && contour.size() > 1 && next == contour[1]) {
      contour.pop_back();
      return contour;
    }
    backtrack = direction_of(behind.x - next.x, behind.y - next.y);
    current = next;
    contour.push_back(current);
  }
  fail(ErrorKind::Processing, "contour trace did not terminate");
}

double contour_perimeter(const std::vector<Point>& contour) {
  if (contour.size() < 2) return 0.0;
  long long axial = 0;
  long long diagonal = 0;
  for (std::size_t i = 0; i < contour.size(); ++i) {
    const auto& a = contour[i];
    const auto& b = contour[(i + 1) % contour.size()];
    if (a.x != b.x && a.y != b.y) {
      ++diagonal;
    } else {
      ++axial;
    }
  }
  return static_cast<double>(axial) + std::numbers::sqrt2 * static_cast<double>(diagonal);
}

std::vector<Point> convex_hull(std::vector<Point> points) {
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Point> hull(2 * points.size());
  std::size_t k = 0;
  for (const auto& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    const auto& p = points[i];
    while (k >= lower && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

long long twice_polygon_area(const std::vector<Point>& polygon) {
  long long acc = 0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % polygon.size()];
    acc += static_cast<long long>(a.x) * b.y - static_cast<long long>(b.x) * a.y;
  }
  return acc;
}

namespace {

void trace_region(Region& r) {
  const auto patch = r.patch(1);
  const Point start{r.pixels.front().x - r.bbox.x0 + 1, r.pixels.front().y - r.bbox.y0 + 1};
  r.contour = trace_contour(patch, start);
  for (auto& p : r.contour) {
    p.x += r.bbox.x0 - 1;
    p.y += r.bbox.y0 - 1;
  }
}

}  // namespace

std::vector<Region> extract_regions(const LabelMap& labels) {
  const int k = max_label(labels);
  std::vector<Region> regions(k);
  for (int i = 0; i < k; ++i) {
    regions[i].label = i + 1;
    regions[i].bbox = {labels.width(), labels.height(), -1, -1};
  }
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      const int v = labels(x, y);
      if (v <= 0) continue;
      auto& r = regions[v - 1];
      r.pixels.push_back({x, y});
      r.bbox.x0 = std::min(r.bbox.x0, x);
      r.bbox.y0 = std::min(r.bbox.y0, y);
      r.bbox.x1 = std::max(r.bbox.x1, x);
      r.bbox.y1 = std::max(r.bbox.y1, y);
    }
  }
  for (auto& r : regions) {
    if (r.pixels.empty()) {
      fail(ErrorKind::Processing,
           "label " + std::to_string(r.label) + " has no pixels (labels not contiguous)");
    }
    trace_region(r);
  }
  return regions;
}

Region extract_region(const LabelMap& labels, int label) {
  Region r;
  r.label = label;
  r.bbox = {labels.width(), labels.height(), -1, -1};
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      if (labels(x, y) != label) continue;
      r.pixels.push_back({x, y});
      r.bbox.x0 = std::min(r.bbox.x0, x);
      r.bbox.y0 = std::min(r.bbox.y0, y);
      r.bbox.x1 = std::max(r.bbox.x1, x);
      r.bbox.y1 = std::max(r.bbox.y1, y);
    }
  }
  if (r.pixels.empty()) {
    fail(ErrorKind::Processing, "label " + std::to_string(label) + " not present");
  }
  trace_region(r);
  return r;
}

ShapeStats shape_stats(const Region& region) {
  ShapeStats s;
  const long long area = region.area();
  const double perimeter = contour_perimeter(region.contour);
  // The pixel-centre contour pushed out by half a pixel is P + pi long and
  // encloses about the pixel count, so small shapes stay near or below 1.
  const double outer = perimeter + std::numbers::pi;
  s.circularity = 4.0 * std::numbers::pi * static_cast<double>(area) / (outer * outer);

  // Hull over pixel corners so that area <= hull area.
  std::vector<Point> corners;
  corners.reserve(region.contour.size() * 4);
  for (const auto& p : region.contour) {
    const int x = p.x - region.bbox.x0;
    const int y = p.y - region.bbox.y0;
    corners.insert(corners.end(), {{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}});
  }
  const long long hull2 = twice_polygon_area(convex_hull(std::move(corners)));
  s.solidity = hull2 > 0 ? 2.0 * static_cast<double>(area) / static_cast<double>(hull2) : 1.0;

  // Central moments of the union of unit pixel squares, from exact integer
  // sums in bbox-relative coordinates.
  long long sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : region.pixels) {
    const long long x = p.x - region.bbox.x0;
    const long long y = p.y - region.bbox.y0;
    sx += x;
    sy += y;
    sxx += x * x;
    syy += y * y;
    sxy += x * y;
  }
  const double a2 = static_cast<double>(area) * static_cast<double>(area);
  const double mu20 = static_cast<double>(area * sxx - sx * sx) / a2 + 1.0 / 12.0;
  const double mu02 = static_cast<double>(area * syy - sy * sy) / a2 + 1.0 / 12.0;
  const double mu11 = static_cast<double>(area * sxy - sx * sy) / a2;
  const double half_sum = 0.5 * (mu20 + mu02);
  const double root = std::sqrt(0.25 * (mu20 - mu02) * (mu20 - mu02) + mu11 * mu11);
  const double major = half_sum + root;
  const double minor = half_sum - root;
  s.eccentricity = std::sqrt(std::max(0.0, 1.0 - minor / major));
  return s;
}

FeatureVector region_features(const Region& region, const ProbabilityMap& prob) {
  if (region.area() < 3) {
    fail(ErrorKind::Processing, "region " + std::to_string(region.label) +
                                    " has fewer than 3 pixels; moments degenerate");
  }
  for (const auto& p : region.pixels) {
    if (!prob.contains(p.x, p.y)) {
      fail(ErrorKind::Processing, "region lies outside the probability map");
    }
  }
  FeatureVector f;
  f.area = static_cast<double>(region.area());
  f.perimeter = contour_perimeter(region.contour);
  const auto shape = shape_stats(region);
  f.circularity = shape.circularity;
  f.solidity = shape.solidity;
  f.eccentricity = shape.eccentricity;
  f.extent = f.area / static_cast<double>(region.bbox.area());

  // Deepest contour point below the hull of the contour's pixel centres.
  std::vector<Point> rel;
  rel.reserve(region.contour.size());
  for (const auto& p : region.contour) rel.push_back({p.x - region.bbox.x0, p.y - region.bbox.y0});
  const auto hull = convex_hull(rel);
  double depth = 0.0;
  if (hull.size() >= 3) {
    for (const auto& p : rel) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        const double len = std::hypot(static_cast<double>(b.x - a.x), static_cast<double>(b.y - a.y));
        nearest = std::min(nearest, static_cast<double>(cross(a, b, p)) / len);
      }
      depth = std::max(depth, nearest);
    }
  }
  f.max_concavity_depth = depth;

  double mean = 0.0;
  for (const auto& p : region.pixels) mean += prob(p.x, p.y);
  mean /= f.area;
  double var = 0.0;
  for (const auto& p : region.pixels) {
    const double d = prob(p.x, p.y) - mean;
    var += d * d;
  }
  f.intensity_std = std::sqrt(var / f.area);
  return f;
}

void write_feature_csv_header(std::ostream& os) {
  os << "label";
  for (auto name : FeatureVector::kNames) os << ',' << name;
  os << '\n';
}

void write_feature_csv_row(std::ostream& os, int label, const FeatureVector& f) {
  char buf[32];
  os << label;
  for (double v : f.values()) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    os << ',' << buf;
  }
  os << '\n';
}

}  // namespace ki67
