#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ki67 {

// Axis-aligned binary tree stored as a flat node array; node 0 is the root.
// A split sends x[feature] <= threshold left.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  int depth() const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

// Tabular training data; labels are 0/1.
struct Dataset {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;

  std::size_t size() const { return rows.size(); }
  std::size_t n_features() const { return rows.empty() ? 0 : rows.front().size(); }
  void add(std::vector<double> row, int label) {
    rows.push_back(std::move(row));
    labels.push_back(label);
  }
  // Rejects ragged rows, non-finite values, labels outside {0,1} and
  // single-class data.
  void validate() const;
};

namespace detail {

void write_trees(std::ostream& os, const std::vector<DecisionTree>& trees);
std::vector<DecisionTree> read_trees(std::istream& is, int n_features);

// Reads "ki67-model <kind> <version>" and checks both.
void read_model_header(std::istream& is, const std::string& kind, int version);

std::string format_double(double v);

}  // namespace detail
}  // namespace ki67
