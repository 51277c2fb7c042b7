#include "ki67/classify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ki67 {

std::string_view to_string(NucleusClass c) {
  return c == NucleusClass::Positive ? "Positive" : "Negative";
}

namespace {

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(n > 0)) fail(ErrorKind::Usage, "stain vector must be non-zero");
  return {v[0] / n, v[1] / n, v[2] / n};
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

double frobenius(const std::array<Vec3, 3>& m) {
  double s = 0;
  for (const auto& row : m) {
    for (double v : row) s += v * v;
  }
  return std::sqrt(s);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct MaskedStats {
  double mean = 0;
  double sd = 0;
};

MaskedStats masked_stats(const Grid<double>& plane, const BinaryMask& mask) {
  double sum = 0;
  double n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      sum += plane[i];
      n += 1;
    }
  }
  MaskedStats s;
  if (n == 0) return s;
  s.mean = sum / n;
  double var = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) var += (plane[i] - s.mean) * (plane[i] - s.mean);
  }
  s.sd = std::sqrt(var / n);
  return s;
}

}  // namespace

StainVectors StainVectors::h_dab() {
  return from({0.650, 0.704, 0.286}, {0.269, 0.568, 0.778});
}

StainVectors StainVectors::from(const Vec3& hematoxylin, const Vec3& dab) {
  StainVectors s;
  s.basis_[0] = normalized(hematoxylin);
  s.basis_[1] = normalized(dab);
  s.basis_[2] = normalized(cross(s.basis_[0], s.basis_[1]));
  const auto& m = s.basis_;
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-12) fail(ErrorKind::Usage, "stain vectors are collinear");
  auto& inv = s.inverse_;
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  if (frobenius(m) * frobenius(inv) >= 1e6) {
    fail(ErrorKind::Usage, "stain basis is ill-conditioned");
  }
  return s;
}

Vec3 StainVectors::unmix(const Vec3& od) const {
  // od = c * B (row vector times basis rows), so c = od * B^-1.
  Vec3 c{};
  for (int j = 0; j < 3; ++j) {
    c[j] = od[0] * inverse_[0][j] + od[1] * inverse_[1][j] + od[2] * inverse_[2][j];
  }
  return c;
}

Vec3 StainVectors::mix(const Vec3& c) const {
  Vec3 od{};
  for (int i = 0; i < 3; ++i) {
    od[i] = c[0] * basis_[0][i] + c[1] * basis_[1][i] + c[2] * basis_[2][i];
  }
  return od;
}

Vec3 optical_density(std::uint16_t r, std::uint16_t g, std::uint16_t b) {
  auto od = [](std::uint16_t v) { return -std::log10((static_cast<double>(v) + 1.0) / 256.0); };
  return {od(r), od(g), od(b)};
}

std::array<std::uint8_t, 3> od_to_rgb(const Vec3& od) {
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double v = 256.0 * std::pow(10.0, -od[c]) - 1.0;
    out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

Vec3 stain_deconvolve(const StainVectors& stains, std::uint16_t r, std::uint16_t g,
                      std::uint16_t b) {
  return stains.unmix(optical_density(r, g, b));
}

StainPlanes stain_deconvolve(const StainVectors& stains, const RasterImage& rgb) {
  if (rgb.channels != 3 || rgb.bit_depth != 8) {
    fail(ErrorKind::Input, "stain deconvolution needs an 8-bit RGB image");
  }
  StainPlanes planes{Grid<double>(rgb.width, rgb.height), Grid<double>(rgb.width, rgb.height),
                     Grid<double>(rgb.width, rgb.height)};
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const auto c = stain_deconvolve(stains, rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
      planes.h(x, y) = c[0];
      planes.dab(x, y) = c[1];
      planes.residual(x, y) = c[2];
    }
  }
  return planes;
}

NucleusPatch extract_patch(const RasterImage& image, const Region& region) {
  if (image.channels != 3) fail(ErrorKind::Input, "nucleus patches need an RGB image");
  double sx = 0;
  double sy = 0;
  for (const auto& p : region.pixels) {
    sx += p.x;
    sy += p.y;
  }
  const int half = NucleusPatch::kSize / 2;
  const int x0 = static_cast<int>(std::lround(sx / region.area())) - half;
  const int y0 = static_cast<int>(std::lround(sy / region.area())) - half;

  NucleusPatch patch;
  patch.rgb = RasterImage::blank(NucleusPatch::kSize, NucleusPatch::kSize, 3, 8, 0);
  patch.mask = BinaryMask(NucleusPatch::kSize, NucleusPatch::kSize);
  for (int y = 0; y < NucleusPatch::kSize; ++y) {
    for (int x = 0; x < NucleusPatch::kSize; ++x) {
      const int ix = x0 + x;
      const int iy = y0 + y;
      if (ix < 0 || iy < 0 || ix >= image.width || iy >= image.height) continue;
      for (int c = 0; c < 3; ++c) patch.rgb.at(x, y, c) = image.at(ix, iy, c);
    }
  }
  bool any = false;
  for (const auto& p : region.pixels) {
    const int x = p.x - x0;
    const int y = p.y - y0;
    if (patch.mask.contains(x, y)) {
      patch.mask(x, y) = 1;
      any = true;
    }
  }
  if (!any) {
    fail(ErrorKind::Processing,
         "instance " + std::to_string(region.label) + " has no pixels inside its patch");
  }
  return patch;
}

NucleusPatch patch_from_crop(const RasterImage& crop, double od_threshold) {
  if (crop.channels != 3 || crop.width != NucleusPatch::kSize ||
      crop.height != NucleusPatch::kSize) {
    fail(ErrorKind::Input, "patch must be a 32x32 RGB image");
  }
  BinaryMask stained(crop.width, crop.height);
  for (int y = 0; y < crop.height; ++y) {
    for (int x = 0; x < crop.width; ++x) {
      const auto od = optical_density(crop.at(x, y, 0), crop.at(x, y, 1), crop.at(x, y, 2));
      stained(x, y) = od[0] + od[1] + od[2] > od_threshold;
    }
  }
  const auto labels = connected_components(stained);
  int best = 0;
  double best_d = 1e300;
  const double c = (NucleusPatch::kSize - 1) / 2.0;
  for (int y = 0; y < crop.height; ++y) {
    for (int x = 0; x < crop.width; ++x) {
      if (labels(x, y) == 0) continue;
      const double d = (x - c) * (x - c) + (y - c) * (y - c);
      if (d < best_d) {
        best_d = d;
        best = labels(x, y);
      }
    }
  }
  if (best == 0) fail(ErrorKind::Input, "patch contains no stained pixels");
  NucleusPatch patch;
  patch.rgb = crop;
  patch.mask = BinaryMask(crop.width, crop.height);
  for (std::size_t i = 0; i < labels.size(); ++i) patch.mask[i] = labels[i] == best;
  return patch;
}

std::vector<double> HandcraftedFeatures::operator()(const NucleusPatch& patch) const {
  return patch_features(patch, stains_);
}

std::vector<double> patch_features(const NucleusPatch& patch, const StainVectors& stains) {
  LabelMap labels(patch.mask.width(), patch.mask.height());
  long long area = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = patch.mask[i] ? 1 : 0;
    area += patch.mask[i] != 0;
  }
  if (area == 0) fail(ErrorKind::Processing, "patch mask is empty");

  const auto planes = stain_deconvolve(stains, patch.rgb);
  const auto h = masked_stats(planes.h, patch.mask);
  const auto dab = masked_stats(planes.dab, patch.mask);

  double rgb_mean[3] = {0, 0, 0};
  for (int y = 0; y < patch.mask.height(); ++y) {
    for (int x = 0; x < patch.mask.width(); ++x) {
      if (!patch.mask(x, y)) continue;
      for (int c = 0; c < 3; ++c) rgb_mean[c] += patch.rgb.at(x, y, c);
    }
  }
  for (double& v : rgb_mean) v /= static_cast<double>(area);

  const auto shape = shape_stats(extract_region(labels, 1));
  return {h.mean,
          h.sd,
          dab.mean,
          dab.sd,
          dab.mean / std::max(std::abs(h.mean), 1e-3),
          rgb_mean[0],
          rgb_mean[1],
          rgb_mean[2],
          static_cast<double>(area),
          shape.circularity,
          shape.solidity,
          shape.eccentricity};
}

Prediction StainBaselineClassifier::decide(double mean_h, double mean_dab, double scale) {
  const double margin = mean_dab - mean_h;
  Prediction p;
  p.cls = margin > 0 ? NucleusClass::Positive : NucleusClass::Negative;
  p.confidence = sigmoid(margin / scale);
  return p;
}

Prediction StainBaselineClassifier::classify(const NucleusPatch& patch) const {
  const auto planes = stain_deconvolve(stains_, patch.rgb);
  return decide(masked_stats(planes.h, patch.mask).mean,
                masked_stats(planes.dab, patch.mask).mean, scale_);
}

ForestClassifier::ForestClassifier(RfModel model, std::shared_ptr<const FeatureProvider> features)
    : model_(std::move(model)), features_(std::move(features)) {
  if (!features_) fail(ErrorKind::Usage, "forest classifier needs a feature provider");
  if (static_cast<std::size_t>(model_.n_features) != features_->size()) {
    fail(ErrorKind::Model, "random forest expects " + std::to_string(model_.n_features) +
                               " features but the provider yields " +
                               std::to_string(features_->size()));
  }
}

Prediction ForestClassifier::classify(const NucleusPatch& patch) const {
  const auto f = (*features_)(patch);
  Prediction p;
  p.confidence = model_.positive_fraction(f);
  p.cls = p.confidence > 0.5 ? NucleusClass::Positive : NucleusClass::Negative;
  return p;
}

std::vector<NucleusRecord> classify_nuclei(const LabelMap& labels, const RasterImage& image,
                                           const NucleusClassifier& classifier) {
  if (labels.width() != image.width || labels.height() != image.height) {
    fail(ErrorKind::Input, "label map and image are not aligned");
  }
  const auto regions = extract_regions(labels);
  const int n = static_cast<int>(regions.size());
  std::vector<NucleusRecord> records(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const auto& r = regions[i];
    auto& rec = records[i];
    rec.label = r.label;
    rec.area = r.area();
    double sx = 0;
    double sy = 0;
    for (const auto& p : r.pixels) {
      sx += p.x;
      sy += p.y;
    }
    rec.centroid_x = sx / r.area();
    rec.centroid_y = sy / r.area();
    try {
      const auto pred = classifier.classify(extract_patch(image, r));
      rec.cls = pred.cls;
      rec.confidence = pred.confidence;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) fail(ErrorKind::Processing, e);
  }
  return records;
}

}  // namespace ki67
