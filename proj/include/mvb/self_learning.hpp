#ifndef MVB_SELF_LEARNING_HPP
#define MVB_SELF_LEARNING_HPP

#include "mvb/core.hpp"
#include "mvb/forest.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace mvb {

enum class Policy {
  Msla,  ///< per-class thresholds minimizing the conditional Bayes error bound
  Fsla,  ///< one fixed threshold on the predicted-class vote
  Csla,  ///< percentile schedule on the predicted-class vote
};

Policy parse_policy(std::string_view name);
std::string_view to_string(Policy policy);

struct SelfLearnConfig {
  Policy policy = Policy::Msla;
  double theta_fixed = 0.7;  ///< FSLA threshold
  int max_iterations = 10;   ///< FSLA iteration cap
  double delta = 1.0 / 3.0;  ///< CSLA percentile step
  PosteriorMode posterior_mode = PosteriorMode::Supervised;
  int grid_resolution = 20;  ///< MSLA candidate thresholds per class
  ForestConfig forest;       ///< forest.seed is replaced per iteration
  std::uint64_t seed = 0;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  ThresholdVector theta;
  int selected = 0;
  double bound = 0.0;  ///< conditional Bayes error at theta; +inf when nothing passes
  std::optional<double> pseudo_accuracy;  ///< cumulative, when hidden labels exist
};

struct SelfLearnResult {
  Forest forest;
  std::vector<IterationRecord> history;
  /// Unlabeled-set row indices pseudo-labeled in each iteration.
  std::vector<std::vector<Eigen::Index>> selections;
  /// Final forest predictions on the whole unlabeled set.
  Labels unlabeled_predictions;
};

/// Error-rate bound divided by the fraction of examples whose predicted-class
/// vote passes its threshold; +inf when that fraction is zero.
double conditional_bayes_error(const PosteriorMatrix& post, const VoteMatrix& votes, const ThresholdVector& theta);

/// Per-class threshold search. For class j the candidates are `resolution`
/// lower quantiles of the votes of the examples predicted j; the winner
/// minimizes the class-j share of the bounded error over the share of
/// examples predicted j with vote >= theta_j. Ties prefer the larger theta.
/// Classes that are never predicted get theta_j = 1.
ThresholdVector find_theta_star(const PosteriorMatrix& post, const VoteMatrix& votes, int resolution);

struct PseudoLabels {
  std::vector<Eigen::Index> rows;
  std::vector<int> labels;
};

/// Rows whose predicted-class vote reaches that class's threshold.
PseudoLabels select_pseudo(const VoteMatrix& votes, const ThresholdVector& theta);

/// Linear-interpolation percentile, p in [0, 1], of an unsorted sample.
double percentile(std::vector<double> values, double p);

SelfLearnResult run_self_learning(const LabeledSet& labeled, const UnlabeledSet& unlabeled, int num_classes,
                                  const SelfLearnConfig& config);

/// CSV with columns iteration, theta_1..theta_K, selected, bound, pseudo_accuracy.
void write_history_csv(std::ostream& out, const std::vector<IterationRecord>& history, Eigen::Index num_classes);

}  // namespace mvb

#endif  // MVB_SELF_LEARNING_HPP
