#include "ki67/pipeline.hpp"

namespace ki67 {

PipelineResult run_pipeline(const RasterImage& rgb, const ProbabilityMap& prob,
                            const PostprocParams& postproc, const OverlapDetector& detector,
                            const SeparationParams& separation,
                            const NucleusClassifier& classifier) {
  if (rgb.width != prob.width() || rgb.height != prob.height()) {
    fail(ErrorKind::Input, "image is " + std::to_string(rgb.width) + "x" +
                               std::to_string(rgb.height) + " but the probability map is " +
                               std::to_string(prob.width()) + "x" +
                               std::to_string(prob.height()));
  }
  PipelineResult r;
  r.mask = postprocess(prob, postproc);
  r.separation = separate_all(r.mask, prob, detector, separation);
  r.nuclei = classify_nuclei(r.separation.labels, rgb, classifier);
  r.counts = count_roi(r.separation.labels, r.nuclei);
  return r;
}

}  // namespace ki67
