#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ki67/classify.hpp"
#include "ki67/raster.hpp"

namespace ki67 {

enum class RoiKind { Hotspot, Medium, Edge, Other };

std::string_view to_string(RoiKind k);
RoiKind parse_roi_kind(std::string_view name);  // unknown names map to Other

struct RegionCount {
  std::string region_id;
  long long n_positive = 0;
  long long n_total = 0;
  RoiKind roi_kind = RoiKind::Other;
};

struct PiReport {
  double pi = 0;                    // percentage
  int r = 0;                        // regions that entered the mean
  std::vector<double> per_region;   // percentages, input order
  std::vector<std::string> warnings;
};

// PI = (1/r) * sum_i N_i / T_i * 100.
PiReport pi_score(const std::vector<RegionCount>& regions);

struct AgreementStats {
  std::optional<double> pearson;   // empty when either series is constant
  std::optional<double> spearman;
  std::optional<double> r2;        // empty when manual PI is constant
  double bland_mean_diff = 0;      // mean of manual - auto
  double bland_sd = 0;             // sample (n - 1) standard deviation
  double loa_lower = 0;            // mean -/+ 1.96 sd
  double loa_upper = 0;
};

// Pairs are (manual, auto). Requires at least 3 pairs.
AgreementStats agreement(const std::vector<std::pair<double, double>>& pairs);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Ranks starting at 1, tied values share their average rank.
std::vector<double> average_ranks(const std::vector<double>& v);

struct RoiClassification {
  std::string roi_id;
  RoiKind kind = RoiKind::Other;
  std::vector<NucleusRecord> nuclei;
};

// ROIs without nuclei are excluded from the mean with a warning. Fails only
// when no ROI has any nucleus.
PiReport score_case(const std::vector<RoiClassification>& rois);

// Counts positive and total records; the label map only fixes which labels
// exist (every instance must have a record).
RegionCount count_roi(const LabelMap& labels, const std::vector<NucleusRecord>& nuclei,
                      std::string region_id = {}, RoiKind kind = RoiKind::Other);

}  // namespace ki67
