#include "ki67/geojson.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ki67 {

using nlohmann::json;

namespace {

[[noreturn]] void bad(int feature, const std::string& what) {
  fail(ErrorKind::Input, "feature " + std::to_string(feature) + ": " + what);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// QuPath writes properties.classification.name; older exports use a plain
// string or properties.name.
std::string class_name(const json& feature) {
  if (!feature.contains("properties") || !feature["properties"].is_object()) return {};
  const auto& props = feature["properties"];
  if (props.contains("classification")) {
    const auto& c = props["classification"];
    if (c.is_string()) return c.get<std::string>();
    if (c.is_object() && c.contains("name") && c["name"].is_string()) {
      return c["name"].get<std::string>();
    }
  }
  if (props.contains("name") && props["name"].is_string()) return props["name"].get<std::string>();
  return {};
}

Ring parse_ring(const json& coords, int feature) {
  if (!coords.is_array()) bad(feature, "ring is not an array");
  Ring ring;
  for (const auto& p : coords) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number()) {
      bad(feature, "malformed coordinate");
    }
    const double x = p[0].get<double>();
    const double y = p[1].get<double>();
    if (!std::isfinite(x) || !std::isfinite(y)) bad(feature, "non-finite coordinate");
    if (!ring.empty() && ring.back().x == x && ring.back().y == y) continue;
    ring.push_back({x, y});
  }
  if (ring.size() < 4) bad(feature, "ring needs at least 4 positions");
  if (ring.front().x != ring.back().x || ring.front().y != ring.back().y) {
    bad(feature, "ring is not closed");
  }
  if (ring_self_intersects(ring)) bad(feature, "self-intersecting polygon");
  return ring;
}

void parse_polygon(const json& rings, int feature, std::vector<Ring>& out) {
  if (!rings.is_array() || rings.empty()) bad(feature, "polygon has no rings");
  for (const auto& r : rings) out.push_back(parse_ring(r, feature));
}

double cross(const PointF& o, const PointF& a, const PointF& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const PointF& p, const PointF& a, const PointF& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_touch(const PointF& a, const PointF& b, const PointF& c, const PointF& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(a, c, d)) || (d2 == 0 && on_segment(b, c, d)) ||
         (d3 == 0 && on_segment(c, a, b)) || (d4 == 0 && on_segment(d, a, b));
}

}  // namespace

bool ring_self_intersects(const Ring& ring) {
  const std::size_t n = ring.size() - 1;  // edges; the last point repeats the first
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) {
        // Neighbouring edges share one vertex; they may only meet there.
        const PointF& shared = j == i + 1 ? ring[j] : ring[i];
        const PointF& p = j == i + 1 ? ring[i] : ring[i + 1];
        const PointF& q = j == i + 1 ? ring[j + 1] : ring[j];
        if (cross(shared, p, q) == 0 &&
            (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y) > 0) {
          return true;  // folds back onto itself
        }
        continue;
      }
      if (segments_touch(ring[i], ring[i + 1], ring[j], ring[j + 1])) return true;
    }
  }
  return false;
}

AnnotationSet parse_qupath_geojson(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Input, std::string("GeoJSON parse error: ") + e.what());
  }
  json features;
  if (doc.is_array()) {
    features = doc;
  } else if (doc.is_object() && doc.value("type", "") == "FeatureCollection") {
    if (!doc.contains("features") || !doc["features"].is_array()) {
      fail(ErrorKind::Input, "FeatureCollection without a features array");
    }
    features = doc["features"];
  } else if (doc.is_object() && doc.value("type", "") == "Feature") {
    features = json::array({doc});
  } else {
    fail(ErrorKind::Input, "expected a GeoJSON FeatureCollection");
  }

  AnnotationSet set;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int idx = static_cast<int>(i);
    const auto& f = features[i];
    if (!f.is_object() || !f.contains("geometry") || !f["geometry"].is_object()) {
      bad(idx, "missing geometry");
    }
    const auto& g = f["geometry"];
    const std::string type = g.value("type", "");
    if (!g.contains("coordinates")) bad(idx, "geometry without coordinates");
    Annotation a;
    a.feature_index = idx;
    if (type == "Polygon") {
      parse_polygon(g["coordinates"], idx, a.rings);
    } else if (type == "MultiPolygon") {
      if (!g["coordinates"].is_array()) bad(idx, "malformed MultiPolygon");
      for (const auto& poly : g["coordinates"]) parse_polygon(poly, idx, a.rings);
    } else {
      set.warnings.push_back("feature " + std::to_string(idx) + ": geometry type '" + type +
                             "' ignored");
      continue;
    }
    const std::string name = class_name(f);
    const std::string lname = lower(name);
    if (lname.find("positive") != std::string::npos) {
      a.cls = NucleusClass::Positive;
    } else if (lname.find("negative") != std::string::npos) {
      a.cls = NucleusClass::Negative;
    } else {
      set.warnings.push_back("feature " + std::to_string(idx) + ": unknown class '" + name +
                             "', skipped");
      continue;
    }
    set.annotations.push_back(std::move(a));
  }
  return set;
}

AnnotationSet load_qupath_geojson(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Input, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_qupath_geojson(ss.str());
}

RasterizedAnnotations rasterize_annotations(const AnnotationSet& set, int width, int height) {
  if (width < 1 || height < 1) fail(ErrorKind::Usage, "raster size must be positive");
  LabelMap labels(width, height);
  std::vector<double> xs;
  for (std::size_t k = 0; k < set.annotations.size(); ++k) {
    const auto& a = set.annotations[k];
    for (int y = 0; y < height; ++y) {
      const double cy = y + 0.5;
      xs.clear();
      for (const auto& ring : a.rings) {
        for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
          const auto& p = ring[i];
          const auto& q = ring[i + 1];
          // Half-open rule so a vertex on the scanline is counted once.
          if ((p.y <= cy) != (q.y <= cy)) {
            xs.push_back(p.x + (cy - p.y) * (q.x - p.x) / (q.y - p.y));
          }
        }
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
        // Pixels whose centre x + 0.5 lies in [xs[i], xs[i+1]).
        const int x0 = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(xs[i + 1] - 0.5)) - 1);
        for (int x = x0; x <= x1; ++x) labels(x, y) = static_cast<int>(k) + 1;
      }
    }
  }
  // Drop annotations that lost every pixel and renumber in annotation order.
  std::vector<char> present(set.annotations.size() + 1, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) present[labels[i]] = 1;
  std::vector<int> remap(present.size(), 0);
  RasterizedAnnotations out;
  int next = 0;
  for (std::size_t k = 1; k < present.size(); ++k) {
    if (!present[k]) continue;
    remap[k] = ++next;
    out.classes.push_back(set.annotations[k - 1].cls);
  }
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = remap[labels[i]];
  out.labels = std::move(labels);
  return out;
}

}  // namespace ki67
