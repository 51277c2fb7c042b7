#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ki67/classify.hpp"
#include "ki67/raster.hpp"

namespace ki67 {

struct PointF {
  double x = 0;
  double y = 0;
};

using Ring = std::vector<PointF>;  // closed: first point == last point

struct Annotation {
  std::vector<Ring> rings;  // exterior plus holes, filled even-odd
  NucleusClass cls = NucleusClass::Negative;
  int feature_index = 0;    // position in the source feature collection
};

struct AnnotationSet {
  std::vector<Annotation> annotations;
  std::vector<std::string> warnings;  // unknown class names, skipped features
};

// Parses a QuPath GeoJSON export (FeatureCollection, a bare feature array or
// a single Feature). Polygon and MultiPolygon geometries are accepted; class
// names containing "positive" or "negative" (any case) are mapped, other
// features are skipped with a warning. Self-intersecting rings are rejected.
AnnotationSet parse_qupath_geojson(std::string_view text);
AnnotationSet load_qupath_geojson(const std::filesystem::path& path);

// True when two non-adjacent edges of the closed ring touch or cross.
bool ring_self_intersects(const Ring& ring);

struct RasterizedAnnotations {
  LabelMap labels;                    // instance k = k-th surviving annotation
  std::vector<NucleusClass> classes;  // index k - 1
};

// Pixel (x, y) belongs to a polygon when its centre (x + 0.5, y + 0.5) is
// inside under the even-odd rule. Later annotations overwrite earlier ones;
// annotations left without pixels are dropped and the rest renumbered.
RasterizedAnnotations rasterize_annotations(const AnnotationSet& set, int width, int height);

}  // namespace ki67
