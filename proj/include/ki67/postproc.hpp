#pragma once

#include "ki67/raster.hpp"

namespace ki67 {

struct PostprocParams {
  int window = 61;        // odd, >= 3
  double offset = -0.3;   // pixel is foreground iff p > local_mean - offset
  int open_radius = 1;    // disc radius of the opening; 0 disables
  int min_area = 30;      // 8-connected components below this are dropped

  void validate() const;
};

// Local mean threshold with mirror padding. Probabilities are quantized to
// multiples of 2^-32 so window sums are exact integers; the rule is evaluated
// as (p + offset) * n > sum over the n-pixel window.
BinaryMask adaptive_threshold(const ProbabilityMap& prob, const PostprocParams& params);

// Background pixels not 4-connected to the image border become foreground.
BinaryMask fill_holes(const BinaryMask& mask);

// Erosion then dilation with a disc. Erosion treats the outside as
// foreground so objects touching the border are not eaten away.
BinaryMask binary_open(const BinaryMask& mask, int radius);

// Drops 8-connected components with fewer than min_area pixels.
BinaryMask remove_small(const BinaryMask& mask, int min_area);

// threshold -> fill holes -> open -> remove small objects.
BinaryMask postprocess(const ProbabilityMap& prob, const PostprocParams& params);

}  // namespace ki67
