#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ki67/raster.hpp"

namespace ki67 {

struct PixelMetrics {
  double acc = 0;
  double miu = 0;
  double fiu = 0;
};

// Two-class (background / foreground) confusion over binary masks.
struct ConfusionTensor {
  int n_cl = 2;
  long long n[2][2] = {{0, 0}, {0, 0}};  // n[i][j]: class i predicted as j

  long long t(int i) const { return n[i][0] + n[i][1]; }
  long long total() const { return t(0) + t(1); }
};

ConfusionTensor confusion(const BinaryMask& pred, const BinaryMask& gt);

// Classes absent from both masks are skipped in the MIU mean.
PixelMetrics pixel_metrics(const ConfusionTensor& c);
PixelMetrics pixel_metrics(const BinaryMask& pred, const BinaryMask& gt);

struct MatchPair {
  int pred = 0;
  int gt = 0;
  long long intersection = 0;
  long long uni = 0;
  double iou() const { return static_cast<double>(intersection) / static_cast<double>(uni); }
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // sorted by gt id
  std::vector<int> fp;           // unmatched pred ids, ascending
  std::vector<int> fn;           // unmatched gt ids, ascending
};

// Pairs with IoU >= 0.5. Above 0.5 a pairing is necessarily one-to-one; at
// exactly 0.5 conflicts go to the larger intersection, then the lower gt id.
MatchResult match_instances(const LabelMap& pred, const LabelMap& gt);

struct InstanceMetrics {
  double dice2 = 0;
  double aji = 0;
  double pq = 0;
  double sq = 0;
  double dq = 0;
};

struct PanopticQuality {
  double pq = 0;
  double sq = 0;
  double dq = 0;
};

PanopticQuality panoptic_quality(const MatchResult& m);

double aji(const LabelMap& pred, const LabelMap& gt);

double dice2(const LabelMap& pred, const LabelMap& gt);

InstanceMetrics instance_metrics(const LabelMap& pred, const LabelMap& gt);

struct ClassificationMetrics {
  long long tp = 0;
  long long fp = 0;
  long long tn = 0;
  long long fn = 0;
  // Percentages; empty when the denominator is zero.
  std::optional<double> accuracy;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> f1;
};

ClassificationMetrics classification_metrics(long long tp, long long fp, long long tn,
                                             long long fn);

// Sparse pixel-count table between two label maps.
struct OverlapTable {
  struct Entry {
    int pred = 0;
    int gt = 0;
    long long count = 0;
  };
  std::vector<Entry> entries;          // pred > 0 and gt > 0, sorted by (pred, gt)
  std::vector<long long> pred_area;    // index = label, [0] = background
  std::vector<long long> gt_area;
};

OverlapTable overlap_table(const LabelMap& pred, const LabelMap& gt);

}  // namespace ki67
