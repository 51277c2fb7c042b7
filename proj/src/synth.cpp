#include "ki67/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ki67/regions.hpp"
#include "ki67/trees.hpp"

namespace ki67 {

namespace {

constexpr int kGap = 3;
constexpr long long kMaxAttempts = 100000;

void check(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Usage, "invalid synth config: " + what);
}

// Radius of the ellipse along direction phi.
double radius_along(const Ellipse& e, double phi) {
  const double c = std::cos(phi - e.theta);
  const double s = std::sin(phi - e.theta);
  return e.a * e.b / std::sqrt(e.b * c * e.b * c + e.a * s * e.a * s);
}

Ellipse random_shape(Rng& rng, const SynthConfig& config) {
  Ellipse e;
  e.a = rng.uniform(config.radius_min, config.radius_max);
  e.b = rng.uniform(config.radius_min, config.radius_max);
  e.theta = rng.uniform(0.0, std::numbers::pi);
  return e;
}

BoundingBox merge(const BoundingBox& a, const BoundingBox& b) {
  return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
          std::max(a.y1, b.y1)};
}

Ellipse shifted(Ellipse e, double dx, double dy) {
  e.cx += dx;
  e.cy += dy;
  return e;
}

struct PairRaster {
  BinaryMask region;
  BinaryMask first;
  BinaryMask second;
  long long inter = 0;
  long long uni = 0;
};

// Rasterizes both ellipses on a grid that holds their union plus `pad`.
// The integer shift keeps pixel membership identical to the original frame.
PairRaster rasterize_pair(const Ellipse& first, const Ellipse& second, int pad) {
  const auto box = merge(first.bounds(), second.bounds());
  const int w = box.width() + 2 * pad;
  const int h = box.height() + 2 * pad;
  PairRaster r{BinaryMask(w, h), BinaryMask(w, h), BinaryMask(w, h)};
  const int ox = pad - box.x0;
  const int oy = pad - box.y0;
  for (const auto& p : rasterize(first)) r.first(p.x + ox, p.y + oy) = 1;
  for (const auto& p : rasterize(second)) r.second(p.x + ox, p.y + oy) = 1;
  for (std::size_t i = 0; i < r.region.size(); ++i) {
    r.region[i] = r.first[i] | r.second[i];
    r.inter += r.first[i] & r.second[i];
    r.uni += r.region[i];
  }
  return r;
}

double sq_dist(const Ellipse& e, int x, int y) {
  return (x - e.cx) * (x - e.cx) + (y - e.cy) * (y - e.cy);
}

ProbabilityMap blur(const ProbabilityMap& in) {
  constexpr int kRadius = 3;
  double w[2 * kRadius + 1];
  double total = 0;
  for (int i = -kRadius; i <= kRadius; ++i) total += w[i + kRadius] = std::exp(-0.5 * i * i);
  for (double& v : w) v /= total;
  ProbabilityMap tmp(in.width(), in.height());
  ProbabilityMap out(in.width(), in.height());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double s = 0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        if (in.contains(x + k, y)) s += w[k + kRadius] * in(x + k, y);
      }
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      double s = 0;
      for (int k = -kRadius; k <= kRadius; ++k) {
        if (in.contains(x, y + k)) s += w[k + kRadius] * tmp(x, y + k);
      }
      out(x, y) = std::clamp(s, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  check(width >= 8 && height >= 8, "image must be at least 8x8");
  check(n_nuclei >= 0, "n_nuclei must be non-negative");
  check(positive_fraction >= 0 && positive_fraction <= 1, "positive_fraction must be in [0,1]");
  check(radius_min >= 3, "radius_min must be at least 3");
  check(radius_max >= radius_min, "radius_max must not be below radius_min");
  check(overlap_fraction >= 0 && overlap_fraction <= 1, "overlap_fraction must be in [0,1]");
  check(max_pair_overlap > 0 && max_pair_overlap <= 1, "max_pair_overlap must be in (0,1]");
  check(stain_noise_sd >= 0, "stain_noise_sd must be non-negative");
  check(2 * radius_max + 2 * kGap < std::min(width, height), "radii too large for the image");
}

bool Ellipse::contains(double x, double y) const {
  const double dx = x - cx;
  const double dy = y - cy;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double u = (dx * c + dy * s) / a;
  const double v = (-dx * s + dy * c) / b;
  return u * u + v * v <= 1.0;
}

BoundingBox Ellipse::bounds() const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double ex = std::sqrt(a * a * c * c + b * b * s * s);
  const double ey = std::sqrt(a * a * s * s + b * b * c * c);
  return {static_cast<int>(std::ceil(cx - ex)), static_cast<int>(std::ceil(cy - ey)),
          static_cast<int>(std::floor(cx + ex)), static_cast<int>(std::floor(cy + ey))};
}

std::vector<Point> rasterize(const Ellipse& e) {
  const auto box = e.bounds();
  std::vector<Point> pts;
  for (int y = box.y0; y <= box.y1; ++y) {
    for (int x = box.x0; x <= box.x1; ++x) {
      if (e.contains(x, y)) pts.push_back({x, y});
    }
  }
  return pts;
}

double ellipse_iou(const Ellipse& first, const Ellipse& second) {
  const auto r = rasterize_pair(first, second, 0);
  return r.uni == 0 ? 0.0 : static_cast<double>(r.inter) / static_cast<double>(r.uni);
}

std::pair<Ellipse, Ellipse> sample_pair(Rng& rng, const SynthConfig& config) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Ellipse first = random_shape(rng, config);
    Ellipse second = random_shape(rng, config);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double reach = radius_along(first, phi) + radius_along(second, phi);
    const double d = rng.uniform(0.5, 1.0) * reach;
    second.cx = d * std::cos(phi);
    second.cy = d * std::sin(phi);
    const auto r = rasterize_pair(first, second, 1);
    if (static_cast<double>(r.inter) > config.max_pair_overlap * static_cast<double>(r.uni)) {
      continue;
    }
    if (max_label(connected_components(r.region)) != 1) continue;
    return {first, second};
  }
  fail(ErrorKind::Processing, "could not sample a fused pair; raise max_pair_overlap");
}

FusedPair sample_fused_pair(Rng& rng, const SynthConfig& config) {
  const auto [first, second] = sample_pair(rng, config);
  auto r = rasterize_pair(first, second, 2);
  FusedPair fp{std::move(r.region), std::move(r.first), std::move(r.second),
               static_cast<double>(r.inter) / static_cast<double>(r.uni)};
  return fp;
}

std::uint64_t image_seed(std::uint64_t seed, std::uint64_t index) {
  return Rng::stream(seed, index).next();
}

SynthImage generate(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int n = config.n_nuclei;
  const double f = config.overlap_fraction;
  const int n_pairs = std::min<int>(static_cast<int>(std::lround(f * n / (1.0 + f))), n / 2);
  const int n_units = n - n_pairs;

  SynthImage out;
  auto& truth = out.truth;
  BinaryMask blocked(config.width, config.height);
  long long attempts = 0;
  for (int u = 0; u < n_units; ++u) {
    const bool pair = u < n_pairs;
    for (;;) {
      if (++attempts > kMaxAttempts) {
        fail(ErrorKind::Processing,
             "could not place nucleus " + std::to_string(truth.nuclei.size() + 1) + " of " +
                 std::to_string(n) + " after " + std::to_string(kMaxAttempts) +
                 " attempts; lower n_nuclei or the radii");
      }
      std::vector<Ellipse> shapes;
      if (pair) {
        auto [a, b] = sample_pair(rng, config);
        shapes = {a, b};
      } else {
        shapes = {random_shape(rng, config)};
      }
      auto box = shapes[0].bounds();
      for (const auto& s : shapes) box = merge(box, s.bounds());
      // Keep one background pixel between every nucleus and the border.
      const double lo_x = 1.0 - box.x0;
      const double hi_x = config.width - 2.0 - box.x1;
      const double lo_y = 1.0 - box.y0;
      const double hi_y = config.height - 2.0 - box.y1;
      if (hi_x < lo_x || hi_y < lo_y) continue;
      const double ox = std::floor(rng.uniform(lo_x, hi_x + 1.0));
      const double oy = std::floor(rng.uniform(lo_y, hi_y + 1.0));

      std::vector<Point> pts;
      bool clear = true;
      for (auto& s : shapes) {
        s = shifted(s, ox, oy);
        for (const auto& p : rasterize(s)) {
          if (!blocked.contains(p.x, p.y) || blocked(p.x, p.y)) clear = false;
          pts.push_back(p);
        }
      }
      if (!clear) continue;

      for (const auto& p : pts) {
        for (int dy = -kGap; dy <= kGap; ++dy) {
          for (int dx = -kGap; dx <= kGap; ++dx) {
            if (blocked.contains(p.x + dx, p.y + dy)) blocked(p.x + dx, p.y + dy) = 1;
          }
        }
      }
      const int first_id = static_cast<int>(truth.nuclei.size()) + 1;
      for (std::size_t k = 0; k < shapes.size(); ++k) {
        SynthNucleus nuc;
        nuc.id = first_id + static_cast<int>(k);
        nuc.shape = shapes[k];
        if (pair) nuc.partner = k == 0 ? first_id + 1 : first_id;
        truth.nuclei.push_back(nuc);
      }
      break;
    }
  }

  truth.labels = LabelMap(config.width, config.height);
  for (const auto& nuc : truth.nuclei) {
    for (const auto& p : rasterize(nuc.shape)) {
      auto& l = truth.labels(p.x, p.y);
      if (l == 0 || sq_dist(nuc.shape, p.x, p.y) < sq_dist(truth.nuclei[l - 1].shape, p.x, p.y)) {
        l = nuc.id;
      }
    }
  }
  truth.components = connected_components(foreground(truth.labels));
  std::vector<int> per_component(static_cast<std::size_t>(max_label(truth.components)) + 1, 0);
  std::vector<char> seen(truth.nuclei.size() + 1, 0);
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const int id = truth.labels[i];
    if (id == 0 || seen[id]) continue;
    seen[id] = 1;
    truth.nuclei[id - 1].component = truth.components[i];
    ++per_component[truth.components[i]];
  }
  for (const auto& nuc : truth.nuclei) {
    if (nuc.component == 0) {
      fail(ErrorKind::Processing, "nucleus " + std::to_string(nuc.id) + " lost all its pixels");
    }
  }
  for (std::size_t c = 1; c < per_component.size(); ++c) {
    if (per_component[c] >= 2) truth.overlap_region_ids.push_back(static_cast<int>(c));
  }

  std::vector<int> order(truth.nuclei.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(order));
  const auto n_positive = static_cast<std::size_t>(std::lround(config.positive_fraction * n));
  for (std::size_t i = 0; i < n_positive; ++i) {
    truth.nuclei[order[i]].cls = NucleusClass::Positive;
  }
  truth.counts = RegionCount{"", static_cast<long long>(n_positive), n, RoiKind::Other};

  const auto stains = StainVectors::h_dab();
  out.rgb = RasterImage::blank(config.width, config.height, 3, 8, 255);
  ProbabilityMap indicator(config.width, config.height);
  for (int y = 0; y < config.height; ++y) {
    for (int x = 0; x < config.width; ++x) {
      const int id = truth.labels(x, y);
      if (id == 0) continue;
      indicator(x, y) = 1.0;
      const bool positive = truth.nuclei[id - 1].cls == NucleusClass::Positive;
      const double c = std::max(0.0, rng.normal(positive ? 0.9 : 0.7, config.stain_noise_sd));
      const Vec3 conc = positive ? Vec3{0.0, c, 0.0} : Vec3{c, 0.0, 0.0};
      const auto px = od_to_rgb(stains.mix(conc));
      for (int ch = 0; ch < 3; ++ch) out.rgb.at(x, y, ch) = px[ch];
    }
  }
  out.prob = blur(indicator);
  return out;
}

void write_truth_csv(const SynthTruth& truth, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::Input, "cannot write " + path.string());
  os << "id,class,cx,cy,a,b,theta,partner,component\n";
  for (const auto& n : truth.nuclei) {
    os << n.id << ',' << to_string(n.cls) << ',' << detail::format_double(n.shape.cx) << ','
       << detail::format_double(n.shape.cy) << ',' << detail::format_double(n.shape.a) << ','
       << detail::format_double(n.shape.b) << ',' << detail::format_double(n.shape.theta)
       << ',' << n.partner << ',' << n.component << '\n';
  }
  if (!os) fail(ErrorKind::Input, "failed writing " + path.string());
}

std::vector<ManifestRow> export_dataset(const SynthConfig& config, int n_images,
                                        const std::filesystem::path& out_dir) {
  config.validate();
  if (n_images < 1) fail(ErrorKind::Usage, "n_images must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::Input, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<ManifestRow> rows(n_images);
  std::vector<std::string> errors(n_images);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_images; ++i) {
    try {
      char name[32];
      std::snprintf(name, sizeof name, "img_%04d", i);
      SynthConfig cfg = config;
      cfg.seed = image_seed(config.seed, static_cast<std::uint64_t>(i));
      const auto img = generate(cfg);
      save_image(img.rgb, out_dir / (std::string(name) + ".png"));
      save_image(from_probability(img.prob), out_dir / (std::string(name) + "_prob.png"));
      save_label_map(img.truth.labels, out_dir / (std::string(name) + "_labels.png"));
      write_truth_csv(img.truth, out_dir / (std::string(name) + "_truth.csv"));
      auto& row = rows[i];
      row.image = name;
      row.seed = cfg.seed;
      row.n_positive = img.truth.counts.n_positive;
      row.n_total = img.truth.counts.n_total;
      row.pi = row.n_total > 0 ? pi_score({img.truth.counts}).pi : 0.0;
      row.n_overlap_regions = static_cast<int>(img.truth.overlap_region_ids.size());
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < n_images; ++i) {
    if (!errors[i].empty()) {
      fail(ErrorKind::Processing, "image " + std::to_string(i) + ": " + errors[i]);
    }
  }

  std::ofstream os(out_dir / "manifest.csv");
  if (!os) fail(ErrorKind::Input, "cannot write manifest in " + out_dir.string());
  os << "image,seed,n_positive,n_total,pi,n_overlap_regions\n";
  for (const auto& r : rows) {
    os << r.image << ',' << r.seed << ',' << r.n_positive << ',' << r.n_total << ','
       << detail::format_double(r.pi) << ',' << r.n_overlap_regions << '\n';
  }
  return rows;
}

}  // namespace ki67
