#pragma once

// Exact greedy tree growth shared by the boosting and forest trainers.

#include <algorithm>
#include <numeric>
#include <span>
#include <vector>

#include "ki67/rng.hpp"
#include "ki67/trees.hpp"

namespace ki67::detail {

struct GrowParams {
  int max_depth = 3;
  int min_leaf = 1;
  int mtry = 0;         // features tried per node; 0 = all
  Rng* rng = nullptr;   // required when mtry < n_features
  double min_gain = 1e-12;
};

// Criterion requirements:
//   using Stats;                       accumulates samples
//   Stats empty() const;
//   void add(Stats&, int sample) const;
//   void subtract(Stats& from, const Stats& part) const;
//   double score(const Stats&) const;  split gain = score(L) + score(R) - score(all)
//   double leaf(std::span<const int> samples) const;
template <typename Criterion>
class TreeGrower {
 public:
  TreeGrower(const Dataset& data, const Criterion& criterion, GrowParams params)
      : data_(data), criterion_(criterion), params_(params) {}

  DecisionTree grow(std::vector<int> samples) {
    DecisionTree tree;
    tree.nodes.emplace_back();
    split(tree, 0, samples, 0);
    return tree;
  }

 private:
  struct Best {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  void split(DecisionTree& tree, int node, std::vector<int>& samples, int depth) {
    const Best best = depth < params_.max_depth ? find_split(samples) : Best{};
    if (best.feature < 0) {
      tree.nodes[node].value = criterion_.leaf(samples);
      return;
    }
    std::vector<int> left;
    std::vector<int> right;
    for (int s : samples) {
      (data_.rows[s][best.feature] <= best.threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();

    const int l = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int r = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto& n = tree.nodes[node];
    n.feature = best.feature;
    n.threshold = best.threshold;
    n.left = l;
    n.right = r;
    split(tree, l, left, depth + 1);
    split(tree, r, right, depth + 1);
  }

  std::vector<int> candidate_features() {
    const int n = static_cast<int>(data_.n_features());
    std::vector<int> features(n);
    std::iota(features.begin(), features.end(), 0);
    if (params_.mtry > 0 && params_.mtry < n) {
      for (int i = 0; i < params_.mtry; ++i) {
        const auto j = i + static_cast<int>(params_.rng->below(n - i));
        std::swap(features[i], features[j]);
      }
      features.resize(params_.mtry);
      std::sort(features.begin(), features.end());
    }
    return features;
  }

  Best find_split(const std::vector<int>& samples) {
    Best best;
    const int n = static_cast<int>(samples.size());
    if (n < 2 * params_.min_leaf) return best;

    auto total = criterion_.empty();
    for (int s : samples) criterion_.add(total, s);
    const double parent = criterion_.score(total);

    std::vector<int> order(samples);
    for (int f : candidate_features()) {
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double va = data_.rows[a][f];
        const double vb = data_.rows[b][f];
        return va != vb ? va < vb : a < b;
      });
      auto left = criterion_.empty();
      for (int i = 0; i + 1 < n; ++i) {
        criterion_.add(left, order[i]);
        const double v = data_.rows[order[i]][f];
        const double next = data_.rows[order[i + 1]][f];
        if (v == next) continue;
        if (i + 1 < params_.min_leaf || n - i - 1 < params_.min_leaf) continue;
        auto right = total;
        criterion_.subtract(right, left);
        const double gain = criterion_.score(left) + criterion_.score(right) - parent;
        if (gain > best.gain + params_.min_gain) {
          best.feature = f;
          best.threshold = v + (next - v) * 0.5;
          if (!(best.threshold < next)) best.threshold = v;
          best.gain = gain;
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const Criterion& criterion_;
  GrowParams params_;
};

}  // namespace ki67::detail
