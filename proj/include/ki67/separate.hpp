#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ki67/gbdt.hpp"
#include "ki67/kernels.hpp"
#include "ki67/raster.hpp"
#include "ki67/regions.hpp"

namespace ki67 {

enum class Splitter { Proposed, Dtw, Gmm, None };

std::string_view to_string(Splitter s);
Splitter parse_splitter(std::string_view name);

struct SeparationParams {
  int kernel_a = 1;          // elliptic erosion kernel semi-axes (1,1 -> 3x3)
  int kernel_b = 1;
  int contour_min = 10;      // regions need more contour points than this
  int dilate_radius = 1;     // applied once to the final seed image
  Splitter splitter = Splitter::Proposed;
  double dtw_h = 2.0;        // h-maxima depth for the distance-transform baseline
  double gmm_single_area = 0.0;  // 0 = median area of regions judged single
  std::uint64_t seed = 42;   // GMM initialisation

  void validate() const;
};

struct SeedSet {
  LabelMap seeds;  // same shape as the region patch, labels 1..count
  int count = 0;
};

// Iterative erosion marker selection. Blobs that vanish between two erosion
// steps are copied from the previous step into the seed image; erosion
// continues until nothing is left. Pixels outside the patch are background.
SeedSet erosion_seeds(const BinaryMask& region, const StructuringElement& kernel);

// Dilates the seeds (radius 0 = none) inside the region, then floods the
// negated Euclidean distance transform from them. Foreground components
// without any seed receive fresh labels after the seed labels.
LabelMap marker_watershed(const BinaryMask& region, const LabelMap& seeds, int dilate_radius);

// Watershed from the regional maxima of the h-maxima transform of the
// distance map.
LabelMap split_region_dtw(const BinaryMask& region, double h = 2.0);

int gmm_component_count(long long area, double single_area);

// EM fit of k Gaussians on foreground coordinates, best of 5 k-means++
// restarts drawn from streams (seed, r); pixels take the component of maximum
// responsibility. Falls back to one part if no restart converges within 200
// iterations.
LabelMap split_region_gmm(const BinaryMask& region, int k, std::uint64_t seed);

// The proposed splitter: erosion seeds + marker watershed.
LabelMap split_region_proposed(const BinaryMask& region, const SeparationParams& params);

struct RegionRecord {
  int label = 0;           // component id in the input mask
  int n_seeds = 1;         // number of output parts
  bool split_applied = false;
  double detector_probability = -1.0;  // -1 when the region was not classified
};

struct SeparationResult {
  LabelMap labels;
  std::vector<RegionRecord> regions;
  std::vector<std::string> warnings;
};

// Returns P(overlapped) for one region.
using OverlapDetector = std::function<double(const Region&, const FeatureVector&)>;

SeparationResult separate_all(const BinaryMask& mask, const ProbabilityMap& prob,
                              const OverlapDetector& detector,
                              const SeparationParams& params);

SeparationResult separate_all(const BinaryMask& mask, const ProbabilityMap& prob,
                              const GbdtModel& detector, const SeparationParams& params);

}  // namespace ki67
