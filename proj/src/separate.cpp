#include "ki67/separate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>

#include "ki67/rng.hpp"

namespace ki67 {

std::string_view to_string(Splitter s) {
  switch (s) {
    case Splitter::Proposed: return "proposed";
    case Splitter::Dtw: return "dtw";
    case Splitter::Gmm: return "gmm";
    case Splitter::None: return "none";
  }
  return "proposed";
}

Splitter parse_splitter(std::string_view name) {
  if (name == "proposed") return Splitter::Proposed;
  if (name == "dtw") return Splitter::Dtw;
  if (name == "gmm") return Splitter::Gmm;
  if (name == "none") return Splitter::None;
  fail(ErrorKind::Usage, "unknown splitter '" + std::string(name) +
                             "' (expected proposed, dtw, gmm or none)");
}

void SeparationParams::validate() const {
  if (kernel_a < 1 || kernel_b < 1) fail(ErrorKind::Usage, "kernel axes must be >= 1");
  if (contour_min < 0) fail(ErrorKind::Usage, "contour_min must be >= 0");
  if (dilate_radius < 0) fail(ErrorKind::Usage, "dilate_radius must be >= 0");
  if (dtw_h < 0) fail(ErrorKind::Usage, "dtw_h must be >= 0");
  if (gmm_single_area < 0) fail(ErrorKind::Usage, "gmm_single_area must be >= 0");
}

namespace {

bool any(const BinaryMask& m) {
  return std::any_of(m.data().begin(), m.data().end(), [](auto v) { return v != 0; });
}

constexpr int kNx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kNy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

}  // namespace

SeedSet erosion_seeds(const BinaryMask& region, const StructuringElement& kernel) {
  if (!any(region)) fail(ErrorKind::Processing, "erosion_seeds: empty region");
  LabelMap seeds(region.width(), region.height());
  int count = 0;

  BinaryMask current = region;
  LabelMap current_blobs = connected_components(current);
  while (any(current)) {
    BinaryMask eroded = kernels::erode(current, kernel, false);
    const int n_blobs = max_label(current_blobs);
    std::vector<char> survives(n_blobs + 1, 0);
    for (std::size_t i = 0; i < eroded.size(); ++i) {
      if (eroded[i]) survives[current_blobs[i]] = 1;
    }
    // Blobs with no eroded descendant vanish here; keep them as seeds.
    std::vector<int> seed_id(n_blobs + 1, 0);
    for (int b = 1; b <= n_blobs; ++b) {
      if (!survives[b]) seed_id[b] = ++count;
    }
    for (std::size_t i = 0; i < current_blobs.size(); ++i) {
      const int b = current_blobs[i];
      if (b > 0 && seed_id[b] > 0) seeds[i] = seed_id[b];
    }
    current = std::move(eroded);
    current_blobs = connected_components(current);
  }
  SeedSet out;
  out.seeds = relabel_sequential(seeds);
  out.count = count;
  return out;
}

LabelMap marker_watershed(const BinaryMask& region, const LabelMap& seeds, int dilate_radius) {
  if (!region.same_shape(seeds)) {
    fail(ErrorKind::Processing, "marker_watershed: seed image shape mismatch");
  }
  if (dilate_radius < 0) fail(ErrorKind::Usage, "dilate_radius must be >= 0");
  const int w = region.width();
  const int h = region.height();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (seeds[i] > 0 && !region[i]) {
      fail(ErrorKind::Processing, "marker_watershed: seed outside region");
    }
  }

  LabelMap labels = seeds;
  if (dilate_radius > 0) {
    auto offsets = StructuringElement::disc(dilate_radius).offsets();
    std::stable_sort(offsets.begin(), offsets.end(), [](const Point& a, const Point& b) {
      return a.x * a.x + a.y * a.y < b.x * b.x + b.y * b.y;
    });
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!region(x, y) || seeds(x, y) > 0) continue;
        int best = 0;
        int best_d = std::numeric_limits<int>::max();
        for (const auto& o : offsets) {
          const int d = o.x * o.x + o.y * o.y;
          if (d > best_d) break;
          const int sx = x + o.x;
          const int sy = y + o.y;
          if (!seeds.contains(sx, sy)) continue;
          const int s = seeds(sx, sy);
          if (s > 0 && (best == 0 || s < best)) {
            best = s;
            best_d = d;
          }
        }
        labels(x, y) = best;
      }
    }
  }

  const auto dist = kernels::distance_transform(region);
  struct Entry {
    double level;
    std::uint64_t order;
    int x;
    int y;
    int label;
    bool operator>(const Entry& o) const {
      return level != o.level ? level > o.level : order > o.order;
    }
  };
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  std::uint64_t order = 0;
  BinaryMask queued(w, h);
  auto push_neighbours = [&](int x, int y, int label) {
    for (int k = 0; k < 8; ++k) {
      const int nx = x + kNx[k];
      const int ny = y + kNy[k];
      if (!region.contains(nx, ny) || !region(nx, ny) || labels(nx, ny) > 0 || queued(nx, ny)) {
        continue;
      }
      queued(nx, ny) = 1;
      queue.push({-dist(nx, ny), order++, nx, ny, label});
    }
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (labels(x, y) > 0) push_neighbours(x, y, labels(x, y));
    }
  }
  while (!queue.empty()) {
    const Entry e = queue.top();
    queue.pop();
    labels(e.x, e.y) = e.label;
    push_neighbours(e.x, e.y, e.label);
  }

  // Components the seeds never reached.
  BinaryMask orphan(w, h);
  bool has_orphans = false;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (region[i] && labels[i] == 0) {
      orphan[i] = 1;
      has_orphans = true;
    }
  }
  if (has_orphans) {
    const int base = max_label(labels);
    const auto extra = connected_components(orphan);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (extra[i] > 0) labels[i] = base + extra[i];
    }
  }
  return labels;
}

namespace {

// Grayscale reconstruction by dilation of `marker` under `mask` (8-connected),
// by alternating raster and anti-raster sweeps until stable.
Grid<double> reconstruct_by_dilation(Grid<double> marker, const Grid<double>& mask) {
  const int w = mask.width();
  const int h = mask.height();
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = marker(x, y);
        for (int k = 0; k < 4; ++k) {  // NW, N, NE, W
          const int nx = x + kNx[k];
          const int ny = y + kNy[k];
          if (marker.contains(nx, ny)) v = std::max(v, marker(nx, ny));
        }
        v = std::min(v, mask(x, y));
        if (v != marker(x, y)) {
          marker(x, y) = v;
          changed = true;
        }
      }
    }
    for (int y = h - 1; y >= 0; --y) {
      for (int x = w - 1; x >= 0; --x) {
        double v = marker(x, y);
        for (int k = 4; k < 8; ++k) {  // E, SW, S, SE
          const int nx = x + kNx[k];
          const int ny = y + kNy[k];
          if (marker.contains(nx, ny)) v = std::max(v, marker(nx, ny));
        }
        v = std::min(v, mask(x, y));
        if (v != marker(x, y)) {
          marker(x, y) = v;
          changed = true;
        }
      }
    }
  }
  return marker;
}

// Plateaus (8-connected, equal value, value > 0) without a higher neighbour.
LabelMap regional_maxima(const Grid<double>& f) {
  const int w = f.width();
  const int h = f.height();
  LabelMap plateau(w, h);
  LabelMap out(w, h);
  int next_plateau = 0;
  int next_label = 0;
  std::vector<Point> members;
  std::vector<Point> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (f(x, y) <= 0 || plateau(x, y) != 0) continue;
      const double v = f(x, y);
      ++next_plateau;
      members.clear();
      stack.assign(1, {x, y});
      plateau(x, y) = next_plateau;
      bool is_max = true;
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        members.push_back(p);
        for (int k = 0; k < 8; ++k) {
          const int nx = p.x + kNx[k];
          const int ny = p.y + kNy[k];
          if (!f.contains(nx, ny)) continue;
          const double u = f(nx, ny);
          if (u > v) is_max = false;
          if (u == v && plateau(nx, ny) == 0) {
            plateau(nx, ny) = next_plateau;
            stack.push_back({nx, ny});
          }
        }
      }
      if (is_max) {
        ++next_label;
        for (const auto& p : members) out(p.x, p.y) = next_label;
      }
    }
  }
  return relabel_sequential(out);
}

}  // namespace

LabelMap split_region_dtw(const BinaryMask& region, double h) {
  if (!any(region)) fail(ErrorKind::Processing, "split_region_dtw: empty region");
  const auto dist = kernels::distance_transform(region);
  Grid<double> marker(dist.width(), dist.height());
  for (std::size_t i = 0; i < dist.size(); ++i) marker[i] = std::max(dist[i] - h, 0.0);
  const auto hmax = reconstruct_by_dilation(std::move(marker), dist);
  auto seeds = regional_maxima(hmax);
  if (max_label(seeds) == 0) {
    // Every peak is shallower than h: the whole region is one part.
    LabelMap one(region.width(), region.height());
    for (std::size_t i = 0; i < one.size(); ++i) one[i] = region[i] ? 1 : 0;
    return one;
  }
  return marker_watershed(region, seeds, 0);
}

int gmm_component_count(long long area, double single_area) {
  if (single_area <= 0) return 1;
  const long long k = std::llround(static_cast<double>(area) / single_area);
  return static_cast<int>(std::clamp<long long>(k, 1, 5));
}

namespace {

struct Gaussian2 {
  double weight = 0;
  double mx = 0, my = 0;
  double sxx = 1, sxy = 0, syy = 1;

  double log_density(double x, double y) const {
    const double det = sxx * syy - sxy * sxy;
    const double dx = x - mx;
    const double dy = y - my;
    const double q = (syy * dx * dx - 2 * sxy * dx * dy + sxx * dy * dy) / det;
    return std::log(weight) - std::log(2 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * q;
  }
};

LabelMap single_part(const BinaryMask& region) {
  LabelMap out(region.width(), region.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = region[i] ? 1 : 0;
  return out;
}

}  // namespace

namespace {

struct EmFit {
  bool converged = false;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::vector<double> resp;  // n x k responsibilities
};

EmFit fit_em(const std::vector<Point>& pts, int k, Rng& rng) {
  constexpr double kReg = 0.1;  // covariance floor, px^2
  const int n = static_cast<int>(pts.size());
  double gx = 0, gy = 0;
  for (const auto& p : pts) {
    gx += p.x;
    gy += p.y;
  }
  gx /= n;
  gy /= n;
  double cxx = 0, cxy = 0, cyy = 0;
  for (const auto& p : pts) {
    cxx += (p.x - gx) * (p.x - gx);
    cxy += (p.x - gx) * (p.y - gy);
    cyy += (p.y - gy) * (p.y - gy);
  }
  cxx = cxx / n + kReg;
  cxy = cxy / n;
  cyy = cyy / n + kReg;

  // k-means++ style seeding of the means.
  std::vector<Gaussian2> comps(k);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  int pick = static_cast<int>(rng.below(n));
  for (int c = 0; c < k; ++c) {
    comps[c] = {1.0 / k, static_cast<double>(pts[pick].x), static_cast<double>(pts[pick].y),
                cxx / k, cxy / k, cyy / k};
    double total = 0;
    for (int i = 0; i < n; ++i) {
      const double dx = pts[i].x - comps[c].mx;
      const double dy = pts[i].y - comps[c].my;
      nearest[i] = std::min(nearest[i], dx * dx + dy * dy);
      total += nearest[i];
    }
    if (c + 1 == k) break;
    double r = rng.uniform() * total;
    pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= nearest[i];
      if (r < 0) {
        pick = i;
        break;
      }
    }
  }

  EmFit fit;
  fit.resp.assign(static_cast<std::size_t>(n) * k, 0.0);
  auto& resp = fit.resp;
  double previous_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200 && !fit.converged; ++iter) {
    double ll = 0;
    for (int i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        resp[i * k + c] = comps[c].log_density(pts[i].x, pts[i].y);
        best = std::max(best, resp[i * k + c]);
      }
      double sum = 0;
      for (int c = 0; c < k; ++c) sum += std::exp(resp[i * k + c] - best);
      const double log_norm = best + std::log(sum);
      ll += log_norm;
      for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(resp[i * k + c] - log_norm);
    }
    for (int c = 0; c < k; ++c) {
      double nk = 0, mx = 0, my = 0;
      for (int i = 0; i < n; ++i) {
        const double r = resp[i * k + c];
        nk += r;
        mx += r * pts[i].x;
        my += r * pts[i].y;
      }
      if (nk < 1e-9) {
        nk = 1e-9;  // starved component; keep it alive with a tiny weight
      }
      mx /= nk;
      my /= nk;
      double sxx = 0, sxy = 0, syy = 0;
      for (int i = 0; i < n; ++i) {
        const double r = resp[i * k + c];
        const double dx = pts[i].x - mx;
        const double dy = pts[i].y - my;
        sxx += r * dx * dx;
        sxy += r * dx * dy;
        syy += r * dy * dy;
      }
      comps[c] = {nk / n, mx, my, sxx / nk + kReg, sxy / nk, syy / nk + kReg};
    }
    if (std::isfinite(previous_ll) &&
        std::abs(ll - previous_ll) <= 1e-6 * std::max(1.0, std::abs(ll))) {
      fit.converged = true;
    }
    previous_ll = ll;
    fit.log_likelihood = ll;
  }
  return fit;
}

}  // namespace

LabelMap split_region_gmm(const BinaryMask& region, int k, std::uint64_t seed) {
  if (!any(region)) fail(ErrorKind::Processing, "split_region_gmm: empty region");
  std::vector<Point> pts;
  for (int y = 0; y < region.height(); ++y) {
    for (int x = 0; x < region.width(); ++x) {
      if (region(x, y)) pts.push_back({x, y});
    }
  }
  const int n = static_cast<int>(pts.size());
  k = std::clamp(k, 1, n);
  if (k == 1) return single_part(region);

  // Several seeded restarts; the converged fit with the highest likelihood wins.
  constexpr int kRestarts = 5;
  EmFit best;
  for (int r = 0; r < kRestarts; ++r) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
    auto fit = fit_em(pts, k, rng);
    if (fit.converged && (!best.converged || fit.log_likelihood > best.log_likelihood)) {
      best = std::move(fit);
    }
  }
  if (!best.converged) return single_part(region);

  const auto& resp = best.resp;
  LabelMap out(region.width(), region.height());
  for (int i = 0; i < n; ++i) {
    int top = 0;
    for (int c = 1; c < k; ++c) {
      if (resp[i * k + c] > resp[i * k + top]) top = c;
    }
    out(pts[i].x, pts[i].y) = top + 1;
  }
  return relabel_sequential(out);
}

LabelMap split_region_proposed(const BinaryMask& region, const SeparationParams& params) {
  const auto kernel = StructuringElement::ellipse(params.kernel_a, params.kernel_b);
  const auto seeds = erosion_seeds(region, kernel);
  return marker_watershed(region, seeds.seeds, params.dilate_radius);
}

namespace {

struct RegionOutcome {
  LabelMap parts;  // patch with 1-pixel padding, or empty when unsplit
  RegionRecord record;
  bool classified = false;
  std::string warning;
  std::string error;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

SeparationResult separate_all(const BinaryMask& mask, const ProbabilityMap& prob,
                              const OverlapDetector& detector,
                              const SeparationParams& params) {
  params.validate();
  if (!mask.same_shape(prob)) {
    fail(ErrorKind::Processing, "mask and probability map differ in size");
  }
  const auto components = connected_components(mask);
  const auto regions = extract_regions(components);
  const int n = static_cast<int>(regions.size());
  std::vector<RegionOutcome> outcomes(n);

  // Pass 1: overlap detection.
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < n; ++r) {
    auto& out = outcomes[r];
    const auto& region = regions[r];
    out.record.label = region.label;
    if (static_cast<int>(region.contour.size()) <= params.contour_min) continue;
    try {
      const auto features = region_features(region, prob);
      out.record.detector_probability = detector(region, features);
      out.classified = true;
    } catch (const std::exception& e) {
      out.warning = "region " + std::to_string(region.label) +
                    ": feature extraction failed, left unsplit (" + e.what() + ")";
    }
  }

  double single_area = params.gmm_single_area;
  if (params.splitter == Splitter::Gmm && single_area <= 0) {
    std::vector<double> singles;
    std::vector<double> all;
    for (int r = 0; r < n; ++r) {
      all.push_back(static_cast<double>(regions[r].area()));
      if (outcomes[r].classified && !is_overlapped(outcomes[r].record.detector_probability)) {
        singles.push_back(static_cast<double>(regions[r].area()));
      }
    }
    single_area = median(singles.empty() ? all : singles);
  }

  // Pass 2: split the regions judged overlapped.
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < n; ++r) {
    auto& out = outcomes[r];
    if (!out.classified || !is_overlapped(out.record.detector_probability) ||
        params.splitter == Splitter::None) {
      continue;
    }
    const auto& region = regions[r];
    try {
      const auto patch = region.patch(1);
      switch (params.splitter) {
        case Splitter::Proposed: out.parts = split_region_proposed(patch, params); break;
        case Splitter::Dtw: out.parts = split_region_dtw(patch, params.dtw_h); break;
        case Splitter::Gmm:
          out.parts = split_region_gmm(
              patch, gmm_component_count(region.area(), single_area),
              params.seed ^ static_cast<std::uint64_t>(region.label));
          break;
        case Splitter::None: break;
      }
      out.record.split_applied = true;
      out.record.n_seeds = max_label(out.parts);
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  }

  SeparationResult result;
  for (const auto& out : outcomes) {
    if (!out.error.empty()) {
      fail(ErrorKind::Processing, "region " + std::to_string(out.record.label) + ": " + out.error);
    }
  }

  // Provisional ids (region order, then part), renumbered by first pixel.
  LabelMap provisional(mask.width(), mask.height());
  int next = 0;
  for (int r = 0; r < n; ++r) {
    const auto& region = regions[r];
    const auto& out = outcomes[r];
    if (out.record.split_applied) {
      const int base = next;
      for (const auto& p : region.pixels) {
        const int part = out.parts(p.x - region.bbox.x0 + 1, p.y - region.bbox.y0 + 1);
        provisional(p.x, p.y) = base + part;
      }
      next += max_label(out.parts);
    } else {
      ++next;
      for (const auto& p : region.pixels) provisional(p.x, p.y) = next;
    }
    result.regions.push_back(out.record);
    if (!out.warning.empty()) result.warnings.push_back(out.warning);
  }
  result.labels = relabel_sequential(provisional);
  return result;
}

SeparationResult separate_all(const BinaryMask& mask, const ProbabilityMap& prob,
                              const GbdtModel& detector, const SeparationParams& params) {
  if (detector.n_features() != FeatureVector::kSize) {
    fail(ErrorKind::Model, "overlap detector must use the 8 region features");
  }
  return separate_all(
      mask, prob,
      [&](const Region&, const FeatureVector& f) { return gbdt_predict(detector, f); },
      params);
}

}  // namespace ki67
