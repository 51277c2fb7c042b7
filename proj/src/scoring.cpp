#include "ki67/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace ki67 {

std::string_view to_string(RoiKind k) {
  switch (k) {
    case RoiKind::Hotspot: return "hotspot";
    case RoiKind::Medium: return "medium";
    case RoiKind::Edge: return "edge";
    case RoiKind::Other: break;
  }
  return "other";
}

RoiKind parse_roi_kind(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "hotspot") return RoiKind::Hotspot;
  if (lower == "medium") return RoiKind::Medium;
  if (lower == "edge") return RoiKind::Edge;
  return RoiKind::Other;
}

PiReport pi_score(const std::vector<RegionCount>& regions) {
  if (regions.empty()) fail(ErrorKind::Processing, "PI needs at least one region");
  PiReport report;
  double sum = 0;
  for (const auto& rc : regions) {
    if (rc.n_total < 1) {
      fail(ErrorKind::Processing, "region '" + rc.region_id + "' has no nuclei");
    }
    if (rc.n_positive < 0 || rc.n_positive > rc.n_total) {
      fail(ErrorKind::Processing,
           "region '" + rc.region_id + "' has an invalid positive count");
    }
    const double pct =
        static_cast<double>(rc.n_positive) / static_cast<double>(rc.n_total) * 100.0;
    report.per_region.push_back(pct);
    sum += pct;
  }
  report.r = static_cast<int>(regions.size());
  report.pi = sum / report.r;
  return report;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

namespace {

bool constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

AgreementStats agreement(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) fail(ErrorKind::Processing, "agreement needs at least 3 pairs");
  std::vector<double> manual;
  std::vector<double> automatic;
  std::vector<double> diff;
  for (const auto& [m, a] : pairs) {
    if (!std::isfinite(m) || !std::isfinite(a)) {
      fail(ErrorKind::Processing, "non-finite PI value");
    }
    manual.push_back(m);
    automatic.push_back(a);
    diff.push_back(m - a);
  }
  const double n = static_cast<double>(pairs.size());

  AgreementStats s;
  if (!constant(manual) && !constant(automatic)) {
    s.pearson = pearson(manual, automatic);
    s.spearman = pearson(average_ranks(manual), average_ranks(automatic));
    // Least-squares fit auto = a + b * manual.
    const double mx = std::accumulate(manual.begin(), manual.end(), 0.0) / n;
    const double my = std::accumulate(automatic.begin(), automatic.end(), 0.0) / n;
    double sxy = 0;
    double sxx = 0;
    for (std::size_t i = 0; i < manual.size(); ++i) {
      sxy += (manual[i] - mx) * (automatic[i] - my);
      sxx += (manual[i] - mx) * (manual[i] - mx);
    }
    const double b = sxy / sxx;
    const double a = my - b * mx;
    double ss_res = 0;
    double ss_tot = 0;
    for (std::size_t i = 0; i < manual.size(); ++i) {
      const double r = automatic[i] - (a + b * manual[i]);
      ss_res += r * r;
      ss_tot += (automatic[i] - my) * (automatic[i] - my);
    }
    s.r2 = 1.0 - ss_res / ss_tot;
  }

  s.bland_mean_diff = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
  double ss = 0;
  for (double d : diff) ss += (d - s.bland_mean_diff) * (d - s.bland_mean_diff);
  s.bland_sd = std::sqrt(ss / (n - 1));
  s.loa_lower = s.bland_mean_diff - 1.96 * s.bland_sd;
  s.loa_upper = s.bland_mean_diff + 1.96 * s.bland_sd;
  return s;
}

RegionCount count_roi(const LabelMap& labels, const std::vector<NucleusRecord>& nuclei,
                      std::string region_id, RoiKind kind) {
  const int k = max_label(labels);
  std::vector<int> cls(static_cast<std::size_t>(k) + 1, -1);
  for (const auto& rec : nuclei) {
    if (rec.label < 1 || rec.label > k) {
      fail(ErrorKind::Input, "classification refers to missing instance " +
                                 std::to_string(rec.label));
    }
    cls[rec.label] = static_cast<int>(rec.cls);
  }
  std::vector<char> present(cls.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) present[labels[i]] = 1;

  RegionCount rc{std::move(region_id), 0, 0, kind};
  for (int l = 1; l <= k; ++l) {
    if (!present[l]) continue;
    if (cls[l] < 0) {
      fail(ErrorKind::Input, "instance " + std::to_string(l) + " has no classification");
    }
    ++rc.n_total;
    rc.n_positive += cls[l] == static_cast<int>(NucleusClass::Positive);
  }
  return rc;
}

PiReport score_case(const std::vector<RoiClassification>& rois) {
  std::vector<RegionCount> counts;
  std::vector<std::string> warnings;
  for (const auto& roi : rois) {
    RegionCount rc{roi.roi_id, 0, 0, roi.kind};
    for (const auto& rec : roi.nuclei) {
      ++rc.n_total;
      rc.n_positive += rec.cls == NucleusClass::Positive;
    }
    if (rc.n_total == 0) {
      warnings.push_back("ROI '" + roi.roi_id + "' has no nuclei and was excluded");
      continue;
    }
    counts.push_back(std::move(rc));
  }
  if (counts.empty()) fail(ErrorKind::Processing, "no ROI contains any nucleus");
  auto report = pi_score(counts);
  report.warnings = std::move(warnings);
  return report;
}

}  // namespace ki67
