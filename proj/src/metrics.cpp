#include "ki67/metrics.hpp"

#include <algorithm>
#include <string>

namespace ki67 {

namespace {

void require_same_shape(const auto& a, const auto& b) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::Input, "prediction is " + std::to_string(a.width()) + "x" +
                               std::to_string(a.height()) + " but ground truth is " +
                               std::to_string(b.width()) + "x" + std::to_string(b.height()));
  }
}

// a/b > c/d for non-negative counts with positive denominators.
bool ratio_greater(long long a, long long b, long long c, long long d) {
  return static_cast<__int128>(a) * d > static_cast<__int128>(c) * b;
}

}  // namespace

ConfusionTensor confusion(const BinaryMask& pred, const BinaryMask& gt) {
  require_same_shape(pred, gt);
  ConfusionTensor c;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    ++c.n[gt[i] ? 1 : 0][pred[i] ? 1 : 0];
  }
  return c;
}

PixelMetrics pixel_metrics(const ConfusionTensor& c) {
  PixelMetrics m;
  const long long total = c.total();
  if (total == 0) fail(ErrorKind::Input, "pixel metrics on an empty image");
  m.acc = static_cast<double>(c.n[0][0] + c.n[1][1]) / static_cast<double>(total);
  double iou_sum = 0;
  double weighted = 0;
  int present = 0;
  for (int i = 0; i < c.n_cl; ++i) {
    const long long predicted_i = c.n[0][i] + c.n[1][i];
    const long long uni = c.t(i) + predicted_i - c.n[i][i];
    if (uni == 0) continue;
    const double iou = static_cast<double>(c.n[i][i]) / static_cast<double>(uni);
    iou_sum += iou;
    weighted += static_cast<double>(c.t(i)) * iou;
    ++present;
  }
  m.miu = iou_sum / present;
  m.fiu = weighted / static_cast<double>(total);
  return m;
}

PixelMetrics pixel_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  return pixel_metrics(confusion(pred, gt));
}

OverlapTable overlap_table(const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred, gt);
  OverlapTable t;
  t.pred_area.assign(static_cast<std::size_t>(max_label(pred)) + 1, 0);
  t.gt_area.assign(static_cast<std::size_t>(max_label(gt)) + 1, 0);
  std::vector<std::uint64_t> keys;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto p = pred[i];
    const auto g = gt[i];
    if (p < 0 || g < 0) fail(ErrorKind::Input, "negative instance label");
    ++t.pred_area[p];
    ++t.gt_area[g];
    if (p > 0 && g > 0) {
      keys.push_back(static_cast<std::uint64_t>(p) << 32 | static_cast<std::uint32_t>(g));
    }
  }
  std::sort(keys.begin(), keys.end());
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    t.entries.push_back({static_cast<int>(keys[i] >> 32),
                         static_cast<int>(keys[i] & 0xFFFFFFFFu),
                         static_cast<long long>(j - i)});
    i = j;
  }
  return t;
}

namespace {

MatchResult match_from_table(const OverlapTable& t) {
  std::vector<MatchPair> candidates;
  for (const auto& e : t.entries) {
    const long long uni = t.pred_area[e.pred] + t.gt_area[e.gt] - e.count;
    if (2 * e.count >= uni) candidates.push_back({e.pred, e.gt, e.count, uni});
  }
  std::sort(candidates.begin(), candidates.end(), [](const MatchPair& a, const MatchPair& b) {
    if (ratio_greater(a.intersection, a.uni, b.intersection, b.uni)) return true;
    if (ratio_greater(b.intersection, b.uni, a.intersection, a.uni)) return false;
    if (a.intersection != b.intersection) return a.intersection > b.intersection;
    if (a.gt != b.gt) return a.gt < b.gt;
    return a.pred < b.pred;
  });

  std::vector<char> pred_used(t.pred_area.size(), 0);
  std::vector<char> gt_used(t.gt_area.size(), 0);
  MatchResult m;
  for (const auto& c : candidates) {
    if (pred_used[c.pred] || gt_used[c.gt]) continue;
    pred_used[c.pred] = gt_used[c.gt] = 1;
    m.pairs.push_back(c);
  }
  std::sort(m.pairs.begin(), m.pairs.end(),
            [](const MatchPair& a, const MatchPair& b) { return a.gt < b.gt; });
  for (std::size_t p = 1; p < t.pred_area.size(); ++p) {
    if (t.pred_area[p] > 0 && !pred_used[p]) m.fp.push_back(static_cast<int>(p));
  }
  for (std::size_t g = 1; g < t.gt_area.size(); ++g) {
    if (t.gt_area[g] > 0 && !gt_used[g]) m.fn.push_back(static_cast<int>(g));
  }
  return m;
}

double aji_from_table(const OverlapTable& t) {
  // Best pred per gt: highest IoU, ties to the lower pred id.
  const std::size_t n_gt = t.gt_area.size();
  std::vector<int> best(n_gt, 0);
  std::vector<long long> best_inter(n_gt, 0);
  std::vector<long long> best_union(n_gt, 1);
  for (const auto& e : t.entries) {  // ascending pred id
    const long long uni = t.pred_area[e.pred] + t.gt_area[e.gt] - e.count;
    if (best[e.gt] == 0 || ratio_greater(e.count, uni, best_inter[e.gt], best_union[e.gt])) {
      best[e.gt] = e.pred;
      best_inter[e.gt] = e.count;
      best_union[e.gt] = uni;
    }
  }
  long long c = 0;
  long long u = 0;
  std::vector<char> used(t.pred_area.size(), 0);
  for (std::size_t g = 1; g < n_gt; ++g) {
    if (t.gt_area[g] == 0) continue;
    if (best[g] == 0) {
      u += t.gt_area[g];
      continue;
    }
    c += best_inter[g];
    u += best_union[g];
    used[best[g]] = 1;
  }
  for (std::size_t p = 1; p < t.pred_area.size(); ++p) {
    if (!used[p]) u += t.pred_area[p];
  }
  if (u == 0) return 1.0;
  return static_cast<double>(c) / static_cast<double>(u);
}

// Area-weighted Dice of every instance in `from` against the instance of
// `to` it overlaps most (ties to the lower id).
double directed_dice(const OverlapTable& t, bool gt_to_pred) {
  const auto& from_area = gt_to_pred ? t.gt_area : t.pred_area;
  const auto& to_area = gt_to_pred ? t.pred_area : t.gt_area;
  std::vector<int> best(from_area.size(), 0);
  std::vector<long long> best_inter(from_area.size(), 0);
  for (const auto& e : t.entries) {
    const int from = gt_to_pred ? e.gt : e.pred;
    const int to = gt_to_pred ? e.pred : e.gt;
    if (e.count > best_inter[from] || (e.count == best_inter[from] && to < best[from])) {
      best[from] = to;
      best_inter[from] = e.count;
    }
  }
  double num = 0;
  long long den = 0;
  for (std::size_t i = 1; i < from_area.size(); ++i) {
    if (from_area[i] == 0) continue;
    den += from_area[i];
    if (best[i] == 0) continue;
    const double dice = 2.0 * static_cast<double>(best_inter[i]) /
                        static_cast<double>(from_area[i] + to_area[best[i]]);
    num += static_cast<double>(from_area[i]) * dice;
  }
  return num / static_cast<double>(den);
}

bool has_instances(const std::vector<long long>& area) {
  return std::any_of(area.begin() + 1, area.end(), [](long long a) { return a > 0; });
}

double dice2_from_table(const OverlapTable& t) {
  const bool any_pred = has_instances(t.pred_area);
  const bool any_gt = has_instances(t.gt_area);
  if (!any_pred && !any_gt) return 1.0;
  if (!any_pred || !any_gt) return 0.0;
  return 0.5 * (directed_dice(t, true) + directed_dice(t, false));
}

}  // namespace

MatchResult match_instances(const LabelMap& pred, const LabelMap& gt) {
  return match_from_table(overlap_table(pred, gt));
}

PanopticQuality panoptic_quality(const MatchResult& m) {
  PanopticQuality q;
  const double tp = static_cast<double>(m.pairs.size());
  if (!m.pairs.empty()) {
    double iou_sum = 0;
    for (const auto& p : m.pairs) iou_sum += p.iou();
    q.sq = iou_sum / tp;
  }
  const double den = tp + 0.5 * static_cast<double>(m.fp.size()) +
                     0.5 * static_cast<double>(m.fn.size());
  if (den > 0) q.dq = tp / den;
  q.pq = q.sq * q.dq;
  return q;
}

double aji(const LabelMap& pred, const LabelMap& gt) {
  return aji_from_table(overlap_table(pred, gt));
}

double dice2(const LabelMap& pred, const LabelMap& gt) {
  return dice2_from_table(overlap_table(pred, gt));
}

InstanceMetrics instance_metrics(const LabelMap& pred, const LabelMap& gt) {
  const auto t = overlap_table(pred, gt);
  const auto q = panoptic_quality(match_from_table(t));
  InstanceMetrics m;
  m.dice2 = dice2_from_table(t);
  m.aji = aji_from_table(t);
  m.pq = q.pq;
  m.sq = q.sq;
  m.dq = q.dq;
  return m;
}

ClassificationMetrics classification_metrics(long long tp, long long fp, long long tn,
                                             long long fn) {
  if (tp < 0 || fp < 0 || tn < 0 || fn < 0) {
    fail(ErrorKind::Processing, "confusion counts must be non-negative");
  }
  const long long total = tp + fp + tn + fn;
  if (total == 0) fail(ErrorKind::Processing, "classification metrics need at least one sample");
  auto pct = [](long long num, long long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  ClassificationMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.accuracy = pct(tp + tn, total);
  m.sensitivity = pct(tp, tp + fn);
  m.specificity = pct(tn, tn + fp);
  m.f1 = pct(2 * tp, 2 * tp + fp + fn);
  return m;
}

}  // namespace ki67
