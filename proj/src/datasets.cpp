#include "ki67/datasets.hpp"

#include <algorithm>

namespace ki67 {

std::vector<RegionSample> label_regions(const SynthImage& image, const PostprocParams& postproc,
                                        int contour_min) {
  const auto mask = postprocess(image.prob, postproc);
  const auto components = connected_components(mask);
  const auto& truth = image.truth;

  // Pixels of each truth nucleus per component, keyed by (component, id).
  const std::size_t n_ids = truth.nuclei.size() + 1;
  std::vector<long long> nucleus_area(n_ids, 0);
  std::vector<std::vector<std::pair<int, long long>>> hits(
      static_cast<std::size_t>(max_label(components)) + 1);
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const int id = truth.labels[i];
    if (id == 0) continue;
    ++nucleus_area[id];
    const int c = components[i];
    if (c == 0) continue;
    auto& h = hits[c];
    auto it = std::find_if(h.begin(), h.end(), [&](const auto& e) { return e.first == id; });
    if (it == h.end()) {
      h.emplace_back(id, 1);
    } else {
      ++it->second;
    }
  }

  std::vector<RegionSample> samples;
  for (const auto& region : extract_regions(components)) {
    if (static_cast<int>(region.contour.size()) <= contour_min || region.area() < 3) continue;
    RegionSample s;
    s.label = region.label;
    s.features = region_features(region, image.prob);
    for (const auto& [id, count] : hits[region.label]) {
      s.n_nuclei += 2 * count >= nucleus_area[id];
    }
    samples.push_back(s);
  }
  return samples;
}

Dataset overlap_dataset(const SynthConfig& base, int per_class, const PostprocParams& postproc,
                        int contour_min) {
  if (per_class < 1) fail(ErrorKind::Usage, "per_class must be at least 1");
  Dataset data;
  int have[2] = {0, 0};
  for (std::uint64_t i = 0; have[0] < per_class || have[1] < per_class; ++i) {
    if (i > 100000) fail(ErrorKind::Processing, "overlap dataset: too few regions of one class");
    SynthConfig cfg = base;
    cfg.seed = image_seed(base.seed, i);
    for (const auto& s : label_regions(generate(cfg), postproc, contour_min)) {
      const int y = s.overlapped() ? 1 : 0;
      if (have[y] >= per_class) continue;
      const auto v = s.features.values();
      data.add(std::vector<double>(v.begin(), v.end()), y);
      ++have[y];
    }
  }
  return data;
}

Dataset nucleus_dataset(const SynthConfig& base, int n_samples, const FeatureProvider& features) {
  if (n_samples < 1) fail(ErrorKind::Usage, "n_samples must be at least 1");
  Dataset data;
  for (std::uint64_t i = 0; static_cast<int>(data.rows.size()) < n_samples; ++i) {
    if (i > 100000) fail(ErrorKind::Processing, "nucleus dataset: generator yields no nuclei");
    SynthConfig cfg = base;
    cfg.seed = image_seed(base.seed, i);
    const auto img = generate(cfg);
    const auto regions = extract_regions(img.truth.labels);
    for (const auto& region : regions) {
      if (static_cast<int>(data.rows.size()) >= n_samples) break;
      const auto cls = img.truth.nuclei[region.label - 1].cls;
      data.add(features(extract_patch(img.rgb, region)), cls == NucleusClass::Positive ? 1 : 0);
    }
  }
  return data;
}

}  // namespace ki67
