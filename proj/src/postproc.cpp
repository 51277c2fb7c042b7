#include "ki67/postproc.hpp"

#include <cmath>
#include <vector>

#include "ki67/kernels.hpp"
#include "ki67/regions.hpp"

namespace ki67 {

namespace {

constexpr double kFixedScale = 4294967296.0;  // 2^32

std::int64_t to_fixed(double v) {
  return static_cast<std::int64_t>(std::llround(v * kFixedScale));
}

}  // namespace

void PostprocParams::validate() const {
  if (window < 3 || window % 2 == 0) {
    fail(ErrorKind::Usage, "postproc window must be odd and >= 3");
  }
  if (open_radius < 0) fail(ErrorKind::Usage, "open_radius must be >= 0");
  if (min_area < 0) fail(ErrorKind::Usage, "min_area must be >= 0");
  if (!(offset >= -1.0 && offset <= 1.0)) {
    fail(ErrorKind::Usage, "offset must lie in [-1, 1]");
  }
}

BinaryMask adaptive_threshold(const ProbabilityMap& prob, const PostprocParams& params) {
  params.validate();
  if (prob.width() < 1 || prob.height() < 1) {
    fail(ErrorKind::Processing, "adaptive_threshold: degenerate probability map");
  }
  Grid<std::int64_t> fixed(prob.width(), prob.height());
  for (std::size_t i = 0; i < prob.size(); ++i) fixed[i] = to_fixed(prob[i]);

  const auto sums = kernels::window_sums(fixed, params.window);
  const std::int64_t n = static_cast<std::int64_t>(params.window) * params.window;
  const std::int64_t off = to_fixed(params.offset);

  BinaryMask out(prob.width(), prob.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (fixed[i] + off) * n > sums[i];
  }
  return out;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  BinaryMask outside(w, h);
  std::vector<Point> stack;
  auto seed = [&](int x, int y) {
    if (!mask(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  constexpr int dx[4] = {1, -1, 0, 0};
  constexpr int dy[4] = {0, 0, 1, -1};
  while (!stack.empty()) {
    const Point p = stack.back();
    stack.pop_back();
    for (int k = 0; k < 4; ++k) {
      const int nx = p.x + dx[k];
      const int ny = p.y + dy[k];
      if (mask.contains(nx, ny)) seed(nx, ny);
    }
  }
  BinaryMask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = !outside[i];
  return out;
}

BinaryMask binary_open(const BinaryMask& mask, int radius) {
  if (radius < 0) fail(ErrorKind::Usage, "opening radius must be >= 0");
  if (radius == 0) return mask;
  const auto se = StructuringElement::disc(radius);
  return kernels::dilate(kernels::erode(mask, se, true), se);
}

BinaryMask remove_small(const BinaryMask& mask, int min_area) {
  if (min_area < 0) fail(ErrorKind::Usage, "min_area must be >= 0");
  if (min_area == 0) return mask;
  const auto labels = connected_components(mask);
  std::vector<int> areas(max_label(labels) + 1, 0);
  for (auto v : labels.data()) ++areas[v];
  BinaryMask out(mask.width(), mask.height());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = labels[i] > 0 && areas[labels[i]] >= min_area;
  }
  return out;
}

BinaryMask postprocess(const ProbabilityMap& prob, const PostprocParams& params) {
  auto mask = adaptive_threshold(prob, params);
  mask = fill_holes(mask);
  mask = binary_open(mask, params.open_radius);
  return remove_small(mask, params.min_area);
}

}  // namespace ki67
