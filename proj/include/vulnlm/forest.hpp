#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vulnlm/lm.hpp"

namespace vulnlm {

// Rows are samples, columns are features.
using FeatureMatrix = Matrix;

// Hyperparameters in the order they are usually tuned: number of trees,
// maximum depth, minimum samples to split a node, features tried per node.
struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 20;
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;  // 0 means ceil(sqrt(number of features))
  std::uint64_t seed = 1;

  std::size_t features_per_node(std::size_t n_features) const;
};

// 1 - p0^2 - p1^2. Throws Error{EmptyLabels}.
double gini(const std::vector<bool>& labels);
double gini_counts(std::size_t negatives, std::size_t positives);

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;  // x <= threshold goes left
  double decrease = 0.0;   // parent impurity minus weighted child impurity
};

// Scans the midpoints between consecutive distinct values of each candidate
// feature. Ties go to the lower feature index, then the lower threshold.
// Returns nothing when no split strictly lowers the impurity.
std::optional<Split> best_split(const FeatureMatrix& x, const std::vector<bool>& y,
                                std::span<const std::size_t> rows,
                                std::span<const std::size_t> candidate_features);

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::size_t negatives = 0;  // training samples reaching the node
  std::size_t positives = 0;
  std::size_t depth = 0;

  bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  const TreeNode& leaf_for(std::span<const double> x) const;
  bool predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct ForestModel {
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<DecisionTree> trees;
  bool single_class = false;  // trained on one class only; predicts it constantly
  // in_bag[t][i]: times row i was drawn for tree t. Not persisted.
  std::vector<std::vector<std::uint32_t>> in_bag;
};

// Each tree is grown on a bootstrap sample with fresh feature draws per node.
ForestModel train_forest(const FeatureMatrix& x, const std::vector<bool>& y, const ForestParams& params);

struct Prediction {
  bool positive = false;
  double vote_fraction = 0.0;  // share of trees voting positive
};

// Majority vote; an exact tie is negative. Throws Error{ShapeMismatch}.
Prediction predict(const ForestModel& model, std::span<const double> x);
std::vector<Prediction> predict_rows(const ForestModel& model, const FeatureMatrix& x);

struct OobScore {
  double accuracy = 0.0;
  std::size_t evaluated = 0;
};
OobScore oob_score(const ForestModel& model, const FeatureMatrix& x, const std::vector<bool>& y);

std::string forest_to_json(const ForestModel& model);
ForestModel forest_from_json(std::string_view text);

}  // namespace vulnlm
