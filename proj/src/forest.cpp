#include "mvb/forest.hpp"

#include "mvb/parallel.hpp"
#include "mvb/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mvb {

namespace {

constexpr int kFormatVersion = 1;

double gini(const std::vector<double>& class_weight, double total) {
  if (total <= 0.0) return 0.0;
  double sq = 0.0;
  for (double w : class_weight) sq += w * w;
  return 1.0 - sq / (total * total);
}

// Candidate rows sorted by each feature (ties by row), shared by all trees.
using FeatureOrders = std::vector<std::vector<int>>;

FeatureOrders presort(const Matrix<double>& x, const std::vector<int>& candidates) {
  FeatureOrders orders(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    const double* col = x.col(f).data();
    std::vector<int>& order = orders[static_cast<std::size_t>(f)];
    order = candidates;
    std::sort(order.begin(), order.end(), [col](int a, int b) { return col[a] < col[b] || (col[a] == col[b] && a < b); });
  }
  return orders;
}

// Every node owns the same [begin, end) slice of each per-feature order, and
// within a slice the rows stay sorted by that feature; splits partition all
// orders stably.
class TreeBuilder {
 public:
  TreeBuilder(const Matrix<double>& x, const Labels& y, int num_classes, const ForestConfig& config, int mtry,
              std::uint64_t seed)
      : x_(x), y_(y), k_(num_classes), config_(config), mtry_(mtry), rng_(seed) {}

  DecisionTree build(const std::vector<int>& candidates, const FeatureOrders& orders, const Eigen::VectorXd& weights) {
    const auto n = static_cast<std::size_t>(x_.rows());
    count_of_.assign(n, 0);
    if (config_.bootstrap) {
      for (std::size_t draw = 0; draw < candidates.size(); ++draw) {
        ++count_of_[static_cast<std::size_t>(candidates[rng_.below(candidates.size())])];
      }
    } else {
      for (int c : candidates) count_of_[static_cast<std::size_t>(c)] = 1;
    }
    weight_.assign(n, 0.0);
    for (int c : candidates) {
      const auto row = static_cast<std::size_t>(c);
      weight_[row] = weights(c) * count_of_[row];
    }

    order_.resize(orders.size());
    for (std::size_t f = 0; f < orders.size(); ++f) {
      order_[f].clear();
      for (int row : orders[f]) {
        if (count_of_[static_cast<std::size_t>(row)] > 0) order_[f].push_back(row);
      }
    }
    goes_left_.assign(n, 0);
    scratch_.resize(order_.front().size());

    nodes_.clear();
    leaves_.clear();
    features_.resize(static_cast<std::size_t>(x_.cols()));
    std::iota(features_.begin(), features_.end(), 0);

    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Pending> stack;
    nodes_.emplace_back();
    stack.push_back({0, 0, order_.front().size(), 0});
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      split_or_leaf(p.node, p.begin, p.end, p.depth, [&](int node, std::size_t b, std::size_t e, int d) {
        stack.push_back({node, b, e, d});
      });
    }

    Matrix<double> fractions(static_cast<Eigen::Index>(leaves_.size()), k_);
    for (std::size_t l = 0; l < leaves_.size(); ++l) {
      for (int c = 0; c < k_; ++c) fractions(static_cast<Eigen::Index>(l), c) = leaves_[l][static_cast<std::size_t>(c)];
    }
    return DecisionTree(std::move(nodes_), std::move(fractions));
  }

 private:
  template <typename Push>
  void split_or_leaf(int node, std::size_t begin, std::size_t end, int depth, Push&& push) {
    std::vector<double> totals(static_cast<std::size_t>(k_), 0.0);
    double weight = 0.0;
    long count = 0;
    for (std::size_t s = begin; s < end; ++s) {
      const auto row = static_cast<std::size_t>(order_.front()[s]);
      totals[static_cast<std::size_t>(y_(static_cast<Eigen::Index>(row)))] += weight_[row];
      weight += weight_[row];
      count += count_of_[row];
    }
    nodes_[static_cast<std::size_t>(node)].weight = weight;
    nodes_[static_cast<std::size_t>(node)].impurity = gini(totals, weight);

    const int classes_present =
        static_cast<int>(std::count_if(totals.begin(), totals.end(), [](double w) { return w > 0.0; }));
    const bool depth_capped = config_.max_depth > 0 && depth >= config_.max_depth;
    if (classes_present <= 1 || count < config_.min_samples_split || depth_capped || end - begin < 2 ||
        !find_split(begin, end, totals, weight, node)) {
      make_leaf(node, totals, weight);
      return;
    }

    const TreeNode& n = nodes_[static_cast<std::size_t>(node)];
    const double* col = x_.col(n.feature).data();
    std::size_t mid = begin;
    for (std::size_t s = begin; s < end; ++s) {
      const int row = order_.front()[s];
      const bool left = col[row] <= n.threshold;
      goes_left_[static_cast<std::size_t>(row)] = left;
      mid += left;
    }
    for (std::vector<int>& order : order_) {
      std::size_t l = begin;
      std::size_t r = 0;
      for (std::size_t s = begin; s < end; ++s) {
        const int row = order[s];
        if (goes_left_[static_cast<std::size_t>(row)]) {
          order[l++] = row;
        } else {
          scratch_[r++] = row;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r),
                order.begin() + static_cast<std::ptrdiff_t>(l));
    }

    const int left = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    const int right = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_[static_cast<std::size_t>(node)].left = left;
    nodes_[static_cast<std::size_t>(node)].right = right;
    push(right, mid, end, depth + 1);
    push(left, begin, mid, depth + 1);
  }

  void make_leaf(int node, const std::vector<double>& totals, double weight) {
    TreeNode& n = nodes_[static_cast<std::size_t>(node)];
    n.feature = -1;
    n.leaf = static_cast<int>(leaves_.size());
    std::vector<double> fractions(totals.size());
    for (std::size_t c = 0; c < totals.size(); ++c) fractions[c] = totals[c] / weight;
    leaves_.push_back(std::move(fractions));
  }

  // Best weighted-Gini split over a random feature subset. Keeps drawing
  // features past mtry until one of them is non-constant in the node.
  bool find_split(std::size_t begin, std::size_t end, const std::vector<double>& totals, double weight, int node) {
    rng_.shuffle(features_);
    double total_sq = 0.0;
    for (double w : totals) total_sq += w * w;

    bool found = false;
    double best_score = -1.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<double> left(static_cast<std::size_t>(k_));

    for (std::size_t f = 0; f < features_.size(); ++f) {
      if (static_cast<int>(f) >= mtry_ && found) break;
      const int feature = features_[f];
      const std::vector<int>& order = order_[static_cast<std::size_t>(feature)];
      const double* col = x_.col(feature).data();
      if (col[order[begin]] == col[order[end - 1]]) continue;

      std::fill(left.begin(), left.end(), 0.0);
      double left_w = 0.0;
      double left_sq = 0.0;
      double right_sq = total_sq;
      for (std::size_t s = begin; s + 1 < end; ++s) {
        const int row = order[s];
        const auto c = static_cast<std::size_t>(y_(row));
        const double w = weight_[static_cast<std::size_t>(row)];
        const double right_c = totals[c] - left[c];
        left_sq += 2.0 * left[c] * w + w * w;
        right_sq += -2.0 * right_c * w + w * w;
        left[c] += w;
        left_w += w;
        const double here = col[row];
        const double next = col[order[s + 1]];
        if (here == next) continue;
        const double right_w = weight - left_w;
        if (left_w <= 0.0 || right_w <= 0.0) continue;
        const double score = left_sq / left_w + right_sq / right_w;
        if (score > best_score) {
          best_score = score;
          best_feature = feature;
          double threshold = 0.5 * (here + next);
          if (!(threshold < next)) threshold = here;
          best_threshold = threshold;
          found = true;
        }
      }
    }
    if (!found) return false;
    TreeNode& n = nodes_[static_cast<std::size_t>(node)];
    n.feature = best_feature;
    n.threshold = best_threshold;
    return true;
  }

  const Matrix<double>& x_;
  const Labels& y_;
  int k_;
  const ForestConfig& config_;
  int mtry_;
  Rng rng_;

  std::vector<int> count_of_;
  std::vector<double> weight_;
  FeatureOrders order_;
  std::vector<char> goes_left_;
  std::vector<int> scratch_;
  std::vector<int> features_;
  std::vector<TreeNode> nodes_;
  std::vector<std::vector<double>> leaves_;
};

}  // namespace

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> depth(nodes_.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const TreeNode& n = nodes_[i];
    deepest = std::max(deepest, depth[i]);
    if (n.leaf < 0) {
      depth[static_cast<std::size_t>(n.left)] = depth[i] + 1;
      depth[static_cast<std::size_t>(n.right)] = depth[i] + 1;
    }
  }
  return deepest;
}

Forest train_forest(const LabeledSet& data, const Eigen::VectorXd& weights, const ForestConfig& config,
                    int num_classes) {
  const Eigen::Index n = data.features.rows();
  const Eigen::Index d = data.features.cols();
  if (num_classes < 2) throw InvalidInput("train_forest: need at least 2 classes");
  if (config.tree_count < 1) throw InvalidInput("train_forest: tree_count must be >= 1");
  if (data.labels.size() != n) throw InvalidInput("train_forest: label count does not match feature rows");
  if (weights.size() != n) throw InvalidInput("train_forest: weight count does not match feature rows");
  if (d < 1) throw InvalidInput("train_forest: no features");
  if (!data.features.allFinite()) throw InvalidInput("train_forest: non-finite feature value");
  if (config.features_per_split < 0 || config.features_per_split > d) {
    throw InvalidInput("train_forest: features_per_split must lie in [1, d]");
  }
  std::vector<int> candidates;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(weights(i)) || weights(i) < 0.0) throw InvalidInput("train_forest: weights must be finite and >= 0");
    if (data.labels(i) < 0 || data.labels(i) >= num_classes) throw InvalidInput("train_forest: label out of range");
    if (weights(i) > 0.0) candidates.push_back(static_cast<int>(i));
  }
  if (candidates.empty()) throw InvalidInput("train_forest: empty effective training set (no positive weight)");

  const int mtry = config.features_per_split > 0
                       ? config.features_per_split
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));

  const FeatureOrders orders = presort(data.features, candidates);
  std::vector<DecisionTree> trees(static_cast<std::size_t>(config.tree_count));
  parallel_for(trees.size(), [&](std::size_t t) {
    TreeBuilder builder(data.features, data.labels, num_classes, config, mtry, config.seed ^ static_cast<std::uint64_t>(t));
    trees[t] = builder.build(candidates, orders, weights);
  });
  return Forest(num_classes, static_cast<int>(d), config, std::move(trees));
}

Forest train_forest(const LabeledSet& data, const ForestConfig& config, int num_classes) {
  return train_forest(data, Eigen::VectorXd::Ones(data.features.rows()), config, num_classes);
}

VoteMatrix forest_votes(const Forest& forest, const Matrix<double>& points) {
  if (points.cols() != forest.num_features()) {
    throw InvalidInput("forest_votes: points have " + std::to_string(points.cols()) + " features, forest expects " +
                       std::to_string(forest.num_features()));
  }
  const auto& trees = forest.trees();
  VoteMatrix votes = VoteMatrix::Zero(points.rows(), forest.num_classes());
  constexpr Eigen::Index kChunk = 256;
  const auto chunks = static_cast<std::size_t>((points.rows() + kChunk - 1) / kChunk);
  parallel_for(chunks, [&](std::size_t chunk) {
    const Eigen::Index begin = static_cast<Eigen::Index>(chunk) * kChunk;
    const Eigen::Index end = std::min(points.rows(), begin + kChunk);
    for (Eigen::Index r = begin; r < end; ++r) {
      for (const DecisionTree& tree : trees) {
        votes.row(r) += tree.leaf_fractions().row(tree.leaf_for(points.row(r)));
      }
    }
  });
  votes /= static_cast<double>(trees.size());
  return votes;
}

std::string Forest::to_text() const {
  nlohmann::json j;
  j["format"] = "mvb-forest";
  j["version"] = kFormatVersion;
  j["num_classes"] = num_classes_;
  j["num_features"] = num_features_;
  j["config"] = {{"tree_count", config_.tree_count},
                 {"max_depth", config_.max_depth},
                 {"min_samples_split", config_.min_samples_split},
                 {"features_per_split", config_.features_per_split},
                 {"bootstrap", config_.bootstrap},
                 {"seed", config_.seed}};
  nlohmann::json trees = nlohmann::json::array();
  for (const DecisionTree& tree : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : tree.nodes()) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.leaf, n.weight, n.impurity});
    }
    nlohmann::json leaves = nlohmann::json::array();
    const Matrix<double>& lf = tree.leaf_fractions();
    for (Eigen::Index l = 0; l < lf.rows(); ++l) {
      std::vector<double> row(static_cast<std::size_t>(lf.cols()));
      for (Eigen::Index c = 0; c < lf.cols(); ++c) row[static_cast<std::size_t>(c)] = lf(l, c);
      leaves.push_back(std::move(row));
    }
    trees.push_back({{"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}});
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

Forest Forest::from_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("forest dump is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "mvb-forest") throw IoError("not a forest dump");
  if (j.value("version", 0) != kFormatVersion) {
    throw IoError("unsupported forest dump version " + std::to_string(j.value("version", 0)));
  }
  try {
    ForestConfig config;
    const auto& c = j.at("config");
    config.tree_count = c.at("tree_count").get<int>();
    config.max_depth = c.at("max_depth").get<int>();
    config.min_samples_split = c.at("min_samples_split").get<int>();
    config.features_per_split = c.at("features_per_split").get<int>();
    config.bootstrap = c.at("bootstrap").get<bool>();
    config.seed = c.at("seed").get<std::uint64_t>();
    const int k = j.at("num_classes").get<int>();
    std::vector<DecisionTree> trees;
    for (const auto& t : j.at("trees")) {
      std::vector<TreeNode> nodes;
      for (const auto& n : t.at("nodes")) {
        nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                         n.at(4).get<int>(), n.at(5).get<double>(), n.at(6).get<double>()});
      }
      const auto& leaves = t.at("leaves");
      Matrix<double> fractions(static_cast<Eigen::Index>(leaves.size()), k);
      for (std::size_t l = 0; l < leaves.size(); ++l) {
        for (int cl = 0; cl < k; ++cl) fractions(static_cast<Eigen::Index>(l), cl) = leaves.at(l).at(cl).get<double>();
      }
      trees.emplace_back(std::move(nodes), std::move(fractions));
    }
    return Forest(k, j.at("num_features").get<int>(), config, std::move(trees));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed forest dump: ") + e.what());
  }
}

}  // namespace mvb
