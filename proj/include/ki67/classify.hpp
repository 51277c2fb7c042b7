#pragma once

#include <array>
#include <memory>
#include <string_view>
#include <vector>

#include "ki67/forest.hpp"
#include "ki67/raster.hpp"
#include "ki67/regions.hpp"

namespace ki67 {

enum class NucleusClass { Negative = 0, Positive = 1 };

std::string_view to_string(NucleusClass c);

using Vec3 = std::array<double, 3>;

// Unit optical-density vectors for hematoxylin, DAB and a residual channel.
class StainVectors {
 public:
  // H = (0.650, 0.704, 0.286), DAB = (0.269, 0.568, 0.778), residual = H x DAB.
  static StainVectors h_dab();
  // Normalises the inputs; the residual is their normalised cross product.
  static StainVectors from(const Vec3& hematoxylin, const Vec3& dab);

  const Vec3& hematoxylin() const { return basis_[0]; }
  const Vec3& dab() const { return basis_[1]; }
  const Vec3& residual() const { return basis_[2]; }

  // Per-channel optical densities -> stain concentrations (h, dab, residual).
  Vec3 unmix(const Vec3& od) const;
  // Stain concentrations -> per-channel optical densities.
  Vec3 mix(const Vec3& concentrations) const;

 private:
  std::array<Vec3, 3> basis_{};
  std::array<Vec3, 3> inverse_{};  // rows map OD to concentrations
};

// OD = -log10((v + 1) / 256) per channel.
Vec3 optical_density(std::uint16_t r, std::uint16_t g, std::uint16_t b);

// Inverse of optical_density: v = round(256 * 10^-od - 1), clamped to [0,255].
std::array<std::uint8_t, 3> od_to_rgb(const Vec3& od);

// (h, dab, residual) for one 8-bit RGB pixel.
Vec3 stain_deconvolve(const StainVectors& stains, std::uint16_t r, std::uint16_t g,
                      std::uint16_t b);

struct StainPlanes {
  Grid<double> h;
  Grid<double> dab;
  Grid<double> residual;
};
StainPlanes stain_deconvolve(const StainVectors& stains, const RasterImage& rgb);

struct NucleusPatch {
  static constexpr int kSize = 32;
  RasterImage rgb;  // kSize x kSize x 3, zero outside the source image
  BinaryMask mask;  // the nucleus inside the crop
};

// Crop centred on the instance's centroid.
NucleusPatch extract_patch(const RasterImage& image, const Region& region);

// Builds a patch from a stored crop; the mask is every pixel whose summed
// optical density exceeds `od_threshold`, restricted to the component
// nearest the centre.
NucleusPatch patch_from_crop(const RasterImage& crop, double od_threshold = 0.15);

// Produces a fixed-length feature vector per patch; an embedding model can be
// dropped in behind this interface.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual std::size_t size() const = 0;
  virtual std::vector<double> operator()(const NucleusPatch& patch) const = 0;
};

// 12 values: mean/std of h OD, mean/std of DAB OD, DAB/H mean ratio, mean
// R/G/B, area, circularity, solidity, eccentricity.
class HandcraftedFeatures final : public FeatureProvider {
 public:
  static constexpr std::size_t kSize = 12;
  explicit HandcraftedFeatures(StainVectors stains = StainVectors::h_dab())
      : stains_(stains) {}
  std::size_t size() const override { return kSize; }
  std::vector<double> operator()(const NucleusPatch& patch) const override;

 private:
  StainVectors stains_;
};

std::vector<double> patch_features(const NucleusPatch& patch,
                                   const StainVectors& stains = StainVectors::h_dab());

struct Prediction {
  NucleusClass cls = NucleusClass::Negative;
  double confidence = 0.0;  // probability-like score of the positive class
};

class NucleusClassifier {
 public:
  virtual ~NucleusClassifier() = default;
  virtual Prediction classify(const NucleusPatch& patch) const = 0;
};

// Positive iff mean DAB OD exceeds mean H OD inside the mask; confidence is
// sigmoid((dab - h) / scale).
class StainBaselineClassifier final : public NucleusClassifier {
 public:
  explicit StainBaselineClassifier(StainVectors stains = StainVectors::h_dab(),
                                   double scale = 0.1)
      : stains_(stains), scale_(scale) {}
  Prediction classify(const NucleusPatch& patch) const override;
  static Prediction decide(double mean_h, double mean_dab, double scale = 0.1);

 private:
  StainVectors stains_;
  double scale_;
};

// Confidence is the fraction of trees voting positive.
class ForestClassifier final : public NucleusClassifier {
 public:
  ForestClassifier(RfModel model, std::shared_ptr<const FeatureProvider> features);
  Prediction classify(const NucleusPatch& patch) const override;
  const RfModel& model() const { return model_; }

 private:
  RfModel model_;
  std::shared_ptr<const FeatureProvider> features_;
};

struct NucleusRecord {
  int label = 0;
  NucleusClass cls = NucleusClass::Negative;
  double confidence = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  long long area = 0;
};

// One record per instance, ordered by label. Labels must be 1..K.
std::vector<NucleusRecord> classify_nuclei(const LabelMap& labels, const RasterImage& image,
                                           const NucleusClassifier& classifier);

}  // namespace ki67
