#ifndef MVB_FOREST_HPP
#define MVB_FOREST_HPP

#include "mvb/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mvb {

struct ForestConfig {
  int tree_count = 200;
  int max_depth = 0;           ///< 0: grow until leaves are pure
  int min_samples_split = 2;   ///< counted with bootstrap multiplicity
  int features_per_split = 0;  ///< 0: ceil(sqrt(d))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  ///< -1 on leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int leaf = -1;         ///< row into the tree's leaf table, -1 on internal nodes
  double weight = 0.0;   ///< total training weight reaching the node
  double impurity = 0.0; ///< weighted Gini impurity of the node
};

class DecisionTree {
 public:
  DecisionTree() = default;
  DecisionTree(std::vector<TreeNode> nodes, Matrix<double> leaf_fractions)
      : nodes_(std::move(nodes)), leaf_fractions_(std::move(leaf_fractions)) {}

  /// Leaf row reached by `point`; x[feature] <= threshold goes left.
  template <typename Derived>
  Eigen::Index leaf_for(const Eigen::MatrixBase<Derived>& point) const {
    int node = 0;
    while (nodes_[node].leaf < 0) {
      const TreeNode& n = nodes_[node];
      node = point(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes_[node].leaf;
  }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  /// One row per leaf: weighted class fractions of the training examples in it.
  const Matrix<double>& leaf_fractions() const { return leaf_fractions_; }
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;
  Matrix<double> leaf_fractions_;
};

class Forest {
 public:
  Forest() = default;
  Forest(int num_classes, int num_features, ForestConfig config, std::vector<DecisionTree> trees)
      : num_classes_(num_classes), num_features_(num_features), config_(config), trees_(std::move(trees)) {}

  int num_classes() const { return num_classes_; }
  int num_features() const { return num_features_; }
  const ForestConfig& config() const { return config_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  /// Versioned JSON dump. Doubles are written in shortest round-trip form, so
  /// from_text(to_text(f)) reproduces f exactly.
  std::string to_text() const;
  static Forest from_text(const std::string& text);

 private:
  int num_classes_ = 0;
  int num_features_ = 0;
  ForestConfig config_;
  std::vector<DecisionTree> trees_;
};

/// Trains a random forest with per-example weights. Weights scale both the
/// Gini split criterion and the leaf class fractions. Tree t draws from its
/// own generator seeded by (seed xor t), so trees can be built in any order.
Forest train_forest(const LabeledSet& data, const Eigen::VectorXd& weights, const ForestConfig& config,
                    int num_classes);

/// Unit weights.
Forest train_forest(const LabeledSet& data, const ForestConfig& config, int num_classes);

/// Mean over trees of the leaf class fractions; every row sums to one.
VoteMatrix forest_votes(const Forest& forest, const Matrix<double>& points);

}  // namespace mvb

#endif  // MVB_FOREST_HPP
