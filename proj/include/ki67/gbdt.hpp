#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ki67/regions.hpp"
#include "ki67/trees.hpp"

namespace ki67 {

struct GbdtParams {
  int n_trees = 200;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 5;
  double subsample = 1.0;
  std::uint64_t seed = 42;

  void validate() const;
};

// Binary classifier: P(overlapped) = sigmoid(base_score + sum of tree outputs).
struct GbdtModel {
  static constexpr int kVersion = 1;

  double base_score = 0.0;
  std::vector<DecisionTree> trees;
  std::vector<std::string> feature_names;

  std::size_t n_features() const { return feature_names.size(); }
  double margin(std::span<const double> x) const;
  friend bool operator==(const GbdtModel&, const GbdtModel&) = default;
};

// Classic gradient boosting on binomial deviance: trees are fitted to the
// residuals y - p by least squares, leaves take a shrunken Newton step
// sum(y - p) / sum(p (1 - p)), halved until the leaf's loss does not rise.
// `loss_trace`, when given, receives the mean training log-loss before the
// first tree and after every tree.
GbdtModel gbdt_train(const Dataset& data, const GbdtParams& params,
                     std::vector<std::string> feature_names = {},
                     std::vector<double>* loss_trace = nullptr);

// Probability of the positive (overlapped) class.
double gbdt_predict(const GbdtModel& model, std::span<const double> features);
double gbdt_predict(const GbdtModel& model, const FeatureVector& features);

// p < 0.5 means a single nucleus.
inline bool is_overlapped(double probability) { return probability >= 0.5; }

// Feature names of the overlap detector, in FeatureVector order.
std::vector<std::string> region_feature_names();

void gbdt_write(const GbdtModel& model, std::ostream& os);
GbdtModel gbdt_read(std::istream& is);
void gbdt_save(const GbdtModel& model, const std::filesystem::path& path);
GbdtModel gbdt_load(const std::filesystem::path& path);

}  // namespace ki67
