#pragma once

#include <string>
#include <vector>

#include "ki67/classify.hpp"
#include "ki67/postproc.hpp"
#include "ki67/scoring.hpp"
#include "ki67/separate.hpp"

namespace ki67 {

struct PipelineResult {
  BinaryMask mask;
  SeparationResult separation;
  std::vector<NucleusRecord> nuclei;
  RegionCount counts;
};

// postprocess -> separate -> classify -> count.
PipelineResult run_pipeline(const RasterImage& rgb, const ProbabilityMap& prob,
                            const PostprocParams& postproc, const OverlapDetector& detector,
                            const SeparationParams& separation,
                            const NucleusClassifier& classifier);

}  // namespace ki67
