#pragma once

#include <array>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "ki67/raster.hpp"

namespace ki67 {

struct BoundingBox {
  int x0 = 0;  // inclusive
  int y0 = 0;
  int x1 = 0;  // inclusive
  int y1 = 0;
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  long long area() const { return static_cast<long long>(width()) * height(); }
};

struct Region {
  int label = 0;
  std::vector<Point> pixels;   // raster order
  BoundingBox bbox;
  std::vector<Point> contour;  // Moore-traced outer boundary, clockwise
  long long area() const { return static_cast<long long>(pixels.size()); }

  // Region pixels as a mask over bbox grown by `pad` on every side.
  BinaryMask patch(int pad = 1) const;
};

struct FeatureVector {
  static constexpr std::size_t kSize = 8;
  static constexpr std::array<std::string_view, kSize> kNames = {
      "area", "perimeter", "circularity", "solidity",
      "eccentricity", "extent", "concavity", "intensity_std"};

  double area = 0;
  double perimeter = 0;
  double circularity = 0;
  double solidity = 0;
  double eccentricity = 0;
  double extent = 0;
  double max_concavity_depth = 0;
  double intensity_std = 0;

  std::array<double, kSize> values() const {
    return {area, perimeter, circularity, solidity,
            eccentricity, extent, max_concavity_depth, intensity_std};
  }
};

// 8-connected labeling; labels 1..K follow the raster order of each
// component's first pixel.
LabelMap connected_components(const BinaryMask& mask);

// Same as connected_components but keeps components of a label map apart:
// neighbouring pixels join only when they share the same input label.
LabelMap label_components(const LabelMap& labels);

// All regions of a label map in label order (index k - 1 holds label k).
// Labels must be 1..K.
std::vector<Region> extract_regions(const LabelMap& labels);

Region extract_region(const LabelMap& labels, int label);

// Moore-neighbour trace that stops when it is back at `start` and about to
// repeat its first move. `start` must be the first raster-order pixel of the
// component.
std::vector<Point> trace_contour(const BinaryMask& mask, Point start);

// Contour length with unit axial and sqrt(2) diagonal steps, closed.
double contour_perimeter(const std::vector<Point>& contour);

// Andrew's monotone chain; counter-clockwise without collinear points.
std::vector<Point> convex_hull(std::vector<Point> points);

// Twice the polygon's signed area (shoelace).
long long twice_polygon_area(const std::vector<Point>& polygon);

// Moment-based shape descriptors shared with the nucleus classifier.
struct ShapeStats {
  double circularity = 0;
  double solidity = 0;
  double eccentricity = 0;
};
ShapeStats shape_stats(const Region& region);

// Throws ErrorKind::Processing for regions of fewer than 3 pixels.
FeatureVector region_features(const Region& region, const ProbabilityMap& prob);

void write_feature_csv_header(std::ostream& os);
void write_feature_csv_row(std::ostream& os, int label, const FeatureVector& f);

}  // namespace ki67
