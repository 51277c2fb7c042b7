#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ki67/classify.hpp"
#include "ki67/raster.hpp"
#include "ki67/rng.hpp"
#include "ki67/scoring.hpp"

namespace ki67 {

struct SynthConfig {
  int width = 256;
  int height = 256;
  int n_nuclei = 40;
  double positive_fraction = 0.25;
  double radius_min = 5.0;         // semi-axis range, px
  double radius_max = 9.0;
  double overlap_fraction = 0.3;   // fraction of merged components that hold two nuclei
  double max_pair_overlap = 0.3;   // IoU cap between the two ellipses of a pair
  double stain_noise_sd = 0.05;    // per-pixel OD noise
  std::uint64_t seed = 7;

  void validate() const;
};

struct Ellipse {
  double cx = 0;
  double cy = 0;
  double a = 0;  // semi-axis along theta
  double b = 0;
  double theta = 0;

  bool contains(double x, double y) const;
  // Pixels whose centres lie inside, as an inclusive integer box.
  BoundingBox bounds() const;
};

std::vector<Point> rasterize(const Ellipse& e);

// Pixel IoU of two rasterized ellipses.
double ellipse_iou(const Ellipse& first, const Ellipse& second);

struct SynthNucleus {
  int id = 0;
  Ellipse shape;
  NucleusClass cls = NucleusClass::Negative;
  int partner = 0;    // id of the fused partner, 0 for singles
  int component = 0;  // label in SynthTruth::components
};

struct SynthTruth {
  LabelMap labels;                      // overlap pixels go to the nearest centre
  LabelMap components;                  // 8-connected components of the union
  std::vector<SynthNucleus> nuclei;     // index id - 1
  std::vector<int> overlap_region_ids;  // components holding two or more nuclei
  RegionCount counts;
};

struct SynthImage {
  RasterImage rgb;
  ProbabilityMap prob;
  SynthTruth truth;
};

// Pairs are placed first, then singles; every placed unit keeps at least 3
// background pixels from all others. Fails after 10^5 placement attempts.
SynthImage generate(const SynthConfig& config);

// Two ellipses whose union is one 8-connected blob and whose IoU is at most
// max_pair_overlap; the second centre is given relative to the first.
std::pair<Ellipse, Ellipse> sample_pair(Rng& rng, const SynthConfig& config);

struct FusedPair {
  BinaryMask region;  // union, with a margin of 2 px
  BinaryMask first;
  BinaryMask second;
  double iou = 0;
};

FusedPair sample_fused_pair(Rng& rng, const SynthConfig& config);

// Seed of image `index` in a dataset with master seed `seed`.
std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index);

struct ManifestRow {
  std::string image;
  std::uint64_t seed = 0;
  long long n_positive = 0;
  long long n_total = 0;
  double pi = 0;
  int n_overlap_regions = 0;
};

// Writes <name>.png, <name>_prob.png, <name>_labels.png and <name>_truth.csv
// per image plus manifest.csv; returns the manifest rows in image order.
std::vector<ManifestRow> export_dataset(const SynthConfig& config, int n_images,
                                        const std::filesystem::path& out_dir);

void write_truth_csv(const SynthTruth& truth, const std::filesystem::path& path);

}  // namespace ki67
