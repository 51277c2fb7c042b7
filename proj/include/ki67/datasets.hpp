#pragma once

#include <vector>

#include "ki67/classify.hpp"
#include "ki67/postproc.hpp"
#include "ki67/regions.hpp"
#include "ki67/synth.hpp"
#include "ki67/trees.hpp"

namespace ki67 {

struct RegionSample {
  int label = 0;           // component id in the post-processed mask
  FeatureVector features;
  int n_nuclei = 0;        // truth nuclei with at least half their area in the region
  bool overlapped() const { return n_nuclei >= 2; }
};

// Post-processes the probability map and labels every region whose contour
// has more than `contour_min` points against the generator truth.
std::vector<RegionSample> label_regions(const SynthImage& image, const PostprocParams& postproc,
                                        int contour_min);

// Generates images (seeds derived from base.seed) until `per_class` single
// and `per_class` overlapped regions are collected. Label 1 = overlapped.
Dataset overlap_dataset(const SynthConfig& base, int per_class, const PostprocParams& postproc,
                        int contour_min);

// One row per truth nucleus from generated images until `n_samples` rows
// exist. Label 1 = positive.
Dataset nucleus_dataset(const SynthConfig& base, int n_samples, const FeatureProvider& features);

}  // namespace ki67
