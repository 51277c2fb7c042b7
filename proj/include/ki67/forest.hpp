#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ki67/trees.hpp"

namespace ki67 {

struct RfParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_leaf = 2;
  int mtry = 0;  // 0 = ceil(sqrt(n_features))
  bool bootstrap = true;
  std::uint64_t seed = 42;

  void validate() const;
};

// Random forest of Gini trees; each leaf holds a hard 0/1 vote.
struct RfModel {
  static constexpr int kVersion = 1;

  std::vector<DecisionTree> trees;
  int n_features = 0;
  std::array<std::string, 2> class_names{"negative", "positive"};
  double oob_accuracy = -1.0;  // -1 when no sample was ever out of bag

  // Fraction of trees voting positive; the negative fraction is 1 - this.
  double positive_fraction(std::span<const double> x) const;
  int predict(std::span<const double> x) const { return positive_fraction(x) > 0.5 ? 1 : 0; }
  friend bool operator==(const RfModel&, const RfModel&) = default;
};

// Tree t draws from its own RNG stream (seed, t), so the model does not
// depend on how trees are scheduled across threads.
RfModel rf_train(const Dataset& data, const RfParams& params);

void rf_write(const RfModel& model, std::ostream& os);
RfModel rf_read(std::istream& is);
void rf_save(const RfModel& model, const std::filesystem::path& path);
RfModel rf_load(const std::filesystem::path& path);

}  // namespace ki67
